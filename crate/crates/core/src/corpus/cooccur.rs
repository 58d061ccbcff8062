use crate::extraction::Bio;

use super::Vocabulary;

/// Symmetric "appeared together in some training bio" relation over ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceIndex {
    neighbors: Vec<Vec<u32>>,
    n_pairs: usize,
}

impl CooccurrenceIndex {
    pub fn co_occur(&self, a: u32, b: u32) -> bool {
        a != b
            && self
                .neighbors
                .get(a as usize)
                .is_some_and(|n| n.binary_search(&b).is_ok())
    }

    /// Sorted neighbor ids of `id`.
    pub fn neighbors(&self, id: u32) -> &[u32] {
        &self.neighbors[id as usize]
    }

    /// Number of unordered pairs.
    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn vocab_size(&self) -> usize {
        self.neighbors.len()
    }

    /// Unordered pairs `(a, b)` with `a < b`, ascending.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(a, ns)| {
            let a = a as u32;
            ns.iter().filter(move |&&b| b > a).map(move |&b| (a, b))
        })
    }
}

pub fn build_cooccurrence(train: &[Bio], vocabulary: &Vocabulary) -> CooccurrenceIndex {
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); vocabulary.len()];
    for bio in train {
        let ids = vocabulary.ids_of(bio);
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                neighbors[a as usize].push(b);
                neighbors[b as usize].push(a);
            }
        }
    }
    let mut total = 0;
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
        total += list.len();
    }
    CooccurrenceIndex {
        neighbors,
        n_pairs: total / 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Source;

    #[test]
    fn direct_construction() {
        let bios = vec![
            Bio::new("1", Source::Synthetic, vec!["a".into(), "b".into()]),
            Bio::new("2", Source::Synthetic, vec!["b".into(), "c".into(), "b".into()]),
        ];
        let vocab =
            Vocabulary::from_entries(vec![("a".into(), 1), ("b".into(), 2), ("c".into(), 1)]).unwrap();
        let index = build_cooccurrence(&bios, &vocab);
        assert!(index.co_occur(0, 1) && index.co_occur(1, 0));
        assert!(index.co_occur(1, 2));
        assert!(!index.co_occur(0, 2));
        for id in 0..3 {
            assert!(!index.co_occur(id, id));
        }
        assert_eq!(index.pairs().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!(index.n_pairs(), 2);
        assert!(!index.co_occur(0, 99));
    }
}
