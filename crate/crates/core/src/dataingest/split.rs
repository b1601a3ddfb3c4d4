use rand::seq::SliceRandom;

use super::manifest::{Manifest, Split};
use crate::error::{Error, Result};
use crate::util::rng_for;

/// Seeded shuffle followed by a prefix split; the train share is
/// `round(n * train_fraction)`.
pub fn split_manifest(manifest: &Manifest, train_fraction: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    if manifest.records.is_empty() {
        return Err(Error::Ingest(format!("manifest {:?} is empty", manifest.name)));
    }
    let n = manifest.records.len();
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, "split"));
    let pick = |idx: &[usize], split: Split| Manifest {
        name: manifest.name.clone(),
        split,
        records: idx.iter().map(|&i| manifest.records[i].clone()).collect(),
        base_dir: manifest.base_dir.clone(),
    };
    Ok((pick(&order[..n_train], Split::Train), pick(&order[n_train..], Split::Test)))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;
    use std::path::PathBuf;

    use super::*;
    use crate::dataingest::ImageRecord;

    pub(crate) fn manifest_of(n: usize) -> Manifest {
        let records = (0..n)
            .map(|i| ImageRecord {
                image_id: format!("img{i:05}"),
                path: PathBuf::from(format!("{i}.png")),
                width: 8,
                height: 8,
                annotations: vec![],
            })
            .collect();
        Manifest::new("m", Split::All, records)
    }

    #[test]
    fn paper_split_sizes() {
        for (n, tr, te) in [(2500, 1750, 750), (3000, 2100, 900), (2, 1, 1)] {
            let frac = if n == 2 { 0.5 } else { 0.7 };
            let (a, b) = split_manifest(&manifest_of(n), frac, 11).unwrap();
            assert_eq!((a.records.len(), b.records.len()), (tr, te));
        }
    }

    #[test]
    fn disjoint_and_deterministic() {
        let m = manifest_of(37);
        let (a, b) = split_manifest(&m, 0.3, 5).unwrap();
        let ids: HashSet<_> = a.records.iter().chain(&b.records).map(|r| r.image_id.clone()).collect();
        assert_eq!(ids.len(), 37);
        assert_eq!(split_manifest(&m, 0.3, 5).unwrap().0, a);
        assert_ne!(split_manifest(&m, 0.3, 6).unwrap().0.records, a.records);
    }

    #[test]
    fn errors() {
        assert!(split_manifest(&manifest_of(0), 0.7, 1).is_err());
        assert!(split_manifest(&manifest_of(4), 1.0, 1).is_err());
    }
}
