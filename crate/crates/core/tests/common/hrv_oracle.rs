//! Direct-formula HRV evaluation over an RR list.

use std::collections::BTreeMap;

pub struct Reference {
    pub mean: f64,
    pub sdnn: f64,
    pub sdsd: f64,
    pub rmssd: f64,
    pub nn50: usize,
    pub pnn50: f64,
    pub ti: f64,
    pub tinn: f64,
}

pub fn reference(rr: &[f64]) -> Reference {
    let n = rr.len() as f64;
    let mean = rr.iter().sum::<f64>() / n;
    let sdnn = (rr.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let d: Vec<f64> = (1..rr.len()).map(|i| rr[i] - rr[i - 1]).collect();
    let m = d.len() as f64;
    let dmean = d.iter().sum::<f64>() / m;
    let sdsd = if d.len() > 1 { (d.iter().map(|x| (x - dmean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt() } else { 0.0 };
    let rmssd = (d.iter().map(|x| x * x).sum::<f64>() / m).sqrt();
    let nn50 = d.iter().filter(|x| x.abs() > 50.0).count();

    let w = 7.8125;
    let mut hist: BTreeMap<i64, usize> = BTreeMap::new();
    for r in rr {
        *hist.entry((r / w).floor() as i64).or_default() += 1;
    }
    let first = *hist.keys().next().unwrap();
    let last = *hist.keys().last().unwrap();
    let modal = *hist.values().max().unwrap();
    let mode_bin = *hist.iter().find(|(_, c)| **c == modal).unwrap().0;
    let apex = (mode_bin as f64 + 0.5) * w;
    let mut best = f64::INFINITY;
    let mut tinn = w;
    for nb in first..=mode_bin {
        for mb in mode_bin + 1..=last + 1 {
            let (nt, mt) = (nb as f64 * w, mb as f64 * w);
            let mut err = 0.0;
            for b in first..=last {
                let c = (b as f64 + 0.5) * w;
                let tri = if c > nt && c <= apex {
                    modal as f64 * (c - nt) / (apex - nt)
                } else if c > apex && c < mt {
                    modal as f64 * (mt - c) / (mt - apex)
                } else {
                    0.0
                };
                let count = *hist.get(&b).unwrap_or(&0) as f64;
                err += (count - tri) * (count - tri);
            }
            if err < best {
                best = err;
                tinn = mt - nt;
            }
        }
    }
    Reference { mean, sdnn, sdsd, rmssd, nn50, pnn50: nn50 as f64 / m, ti: n / modal as f64, tinn }
}
