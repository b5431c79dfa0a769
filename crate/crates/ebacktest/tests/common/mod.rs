//! Finite-support law with exact functional values, used as an independent
//! oracle for validity checks. Everything here is plain sorting and partial
//! sums; it deliberately shares no code with the library's distribution or
//! e-statistic paths.

// Each integration-test target compiles its own copy and uses a subset.
#![allow(dead_code)]

use proptest::prelude::*;

#[derive(Debug, Clone)]
pub struct DiscreteLaw {
    /// Sorted by value, weights normalized to 1.
    atoms: Vec<(f64, f64)>,
}

impl DiscreteLaw {
    pub fn new(pairs: &[(f64, f64)]) -> Self {
        let total: f64 = pairs.iter().map(|(_, w)| w).sum();
        assert!(total > 0.0, "law must carry mass");
        let mut atoms: Vec<(f64, f64)> = pairs.iter().map(|(v, w)| (*v, w / total)).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, w) in atoms {
            match merged.last_mut() {
                Some((mv, mw)) if *mv == v => *mw += w,
                _ => merged.push((v, w)),
            }
        }
        DiscreteLaw { atoms: merged }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|(v, w)| w * f(*v)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expectation(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expectation(|x| (x - m) * (x - m))
    }

    /// Lower p-quantile: the smallest atom whose cumulative weight reaches p.
    pub fn var_level(&self, p: f64) -> f64 {
        let mut cum = 0.0;
        for (v, w) in &self.atoms {
            cum += w;
            if cum >= p - 1e-15 {
                return *v;
            }
        }
        self.atoms.last().expect("nonempty").0
    }

    /// Tail average `(1/(1-p)) * int_p^1 Q_u du`, computed atom by atom.
    pub fn es_level(&self, p: f64) -> f64 {
        let mut cum_prev = 0.0;
        let mut acc = 0.0;
        for (v, w) in &self.atoms {
            let cum = cum_prev + w;
            let overlap = cum.min(1.0) - cum_prev.max(p);
            if overlap > 0.0 {
                acc += v * overlap;
            }
            cum_prev = cum;
        }
        acc / (1.0 - p)
    }
}

/// Strategy: a law on 2..=5 distinct-ish points in [-10, 10].
pub fn arb_law() -> impl Strategy<Value = DiscreteLaw> {
    prop::collection::vec((-10.0f64..10.0, 0.05f64..1.0), 2..=5)
        .prop_map(|pairs| DiscreteLaw::new(&pairs))
}

#[allow(dead_code)]
pub fn arb_level() -> impl Strategy<Value = f64> {
    0.55f64..0.98
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_matches_hand_computation() {
        // 0.6 w.p. 0.95, 2.0 w.p. 0.05 at p = 0.9.
        let law = DiscreteLaw::new(&[(2.0, 0.05), (0.6, 0.95)]);
        assert!((law.var_level(0.9) - 0.6).abs() < 1e-12);
        // ES_0.9 = (0.05 * 0.6 + 0.05 * 2.0) / 0.1 = 1.3.
        assert!((law.es_level(0.9) - 1.3).abs() < 1e-12);
        assert!((law.mean() - (0.95 * 0.6 + 0.05 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn quantile_at_atom_boundary() {
        let law = DiscreteLaw::new(&[(1.0, 0.5), (3.0, 0.5)]);
        assert_eq!(law.var_level(0.5), 1.0);
        assert_eq!(law.var_level(0.500001), 3.0);
        // ES_0.5 = mean of the top half.
        assert!((law.es_level(0.5) - 3.0).abs() < 1e-12);
    }
}
