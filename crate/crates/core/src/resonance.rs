//! Resonances of the dispersion law `j ↦ √|j|`.
//!
//! An n-tuple of nonzero sites `j_i` with signs `σ_i` is resonant when
//! `Σ σ_i j_i = 0` and `Σ σ_i √|j_i| = 0`. The frequency identity is decided in
//! integer arithmetic: writing `√|j| = a√d` with `d` square-free, a combination
//! `Σ c_i a_i √d_i` vanishes iff it vanishes separately on each kernel `d`.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::normalform::twist_matrix;
use crate::spectral::multi_indices;

/// Largest site bound accepted by [`enumerate_resonances`].
pub const MAX_SITE_BOUND: i64 = 5000;

/// `n = a² d` with `d` square-free, by trial division.
pub fn square_free_decomposition(n: u64) -> (u64, u64) {
    assert!(n > 0, "square-free decomposition of zero");
    let (mut a, mut d, mut m) = (1u64, 1u64, n);
    let mut p = 2u64;
    while p * p <= m {
        let mut e = 0;
        while m % p == 0 {
            m /= p;
            e += 1;
        }
        a *= p.pow(e / 2);
        if e % 2 == 1 {
            d *= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    (a, d * m)
}

/// Exact truth of `Σ ℓ_i √|j_i| = 0`. Sites must be nonzero.
pub fn sqrt_combination_is_zero(js: &[i64], ells: &[i64]) -> bool {
    assert_eq!(js.len(), ells.len(), "length mismatch");
    let mut by_kernel: BTreeMap<u64, i128> = BTreeMap::new();
    for (&j, &l) in js.iter().zip(ells) {
        assert!(j != 0, "site 0 is outside the dispersion law's domain");
        if l == 0 {
            continue;
        }
        let (a, d) = square_free_decomposition(j.unsigned_abs());
        *by_kernel.entry(d).or_insert(0) += l as i128 * a as i128;
    }
    by_kernel.values().all(|&s| s == 0)
}

/// Signed site tuple `(j_i, σ_i)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ResonanceTuple {
    pub sites: Vec<i64>,
    pub signs: Vec<i8>,
}

impl ResonanceTuple {
    /// Rejects zero sites, signs other than `±1` and length mismatch.
    pub fn new(sites: Vec<i64>, signs: Vec<i8>) -> Result<Self> {
        if sites.len() != signs.len() || sites.is_empty() {
            return Err(Error::InvalidInput("sites and signs must have equal nonzero length".into()));
        }
        if sites.contains(&0) {
            return Err(Error::InvalidInput("site 0 is not in Z \\ {0}".into()));
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidInput("signs must be +1 or -1".into()));
        }
        Ok(Self { sites, signs })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// `Σ σ_i j_i = 0`.
    pub fn momentum_holds(&self) -> bool {
        self.sites
            .iter()
            .zip(&self.signs)
            .map(|(&j, &s)| j as i128 * s as i128)
            .sum::<i128>()
            == 0
    }

    /// `Σ σ_i √|j_i| = 0`, exactly.
    pub fn frequency_holds(&self) -> bool {
        let ells: Vec<i64> = self.signs.iter().map(|&s| s as i64).collect();
        sqrt_combination_is_zero(&self.sites, &ells)
    }

    pub fn is_resonant(&self) -> bool {
        self.momentum_holds() && self.frequency_holds()
    }

    fn groups(&self) -> (Vec<i64>, Vec<i64>) {
        let mut plus: Vec<i64> = Vec::new();
        let mut minus: Vec<i64> = Vec::new();
        for (&j, &s) in self.sites.iter().zip(&self.signs) {
            if s > 0 {
                plus.push(j);
            } else {
                minus.push(j);
            }
        }
        plus.sort_unstable();
        minus.sort_unstable();
        (plus, minus)
    }

    /// Representative under index permutation and global sign flip: plus
    /// sites (sorted) then minus sites (sorted), the larger group positive, ties
    /// broken lexicographically.
    pub fn canonical(&self) -> Self {
        let (plus, minus) = self.groups();
        let flip = minus.len() > plus.len() || (minus.len() == plus.len() && minus < plus);
        let (p, m) = if flip { (minus, plus) } else { (plus, minus) };
        let signs = std::iter::repeat(1i8)
            .take(p.len())
            .chain(std::iter::repeat(-1i8).take(m.len()))
            .collect();
        Self {
            sites: p.into_iter().chain(m).collect(),
            signs,
        }
    }
}

/// True iff `n` is even and the plus sites pair with equal minus sites.
pub fn is_trivial(t: &ResonanceTuple) -> bool {
    if t.len() % 2 == 1 {
        return false;
    }
    let (plus, minus) = t.groups();
    plus == minus
}

struct Enumerator<'a> {
    bound: i64,
    sqrt: &'a [f64],
}

impl Enumerator<'_> {
    fn s(&self, j: i64) -> f64 {
        self.sqrt[(j + self.bound) as usize]
    }

    fn sites(&self) -> impl Iterator<Item = i64> + Clone {
        let b = self.bound;
        (-b..=b).filter(|&j| j != 0)
    }

    /// Extends nondecreasing plus sites, then minus sites, the last minus site
    /// fixed by the momentum identity.
    fn extend(
        &self,
        p: usize,
        q: usize,
        plus: &mut Vec<i64>,
        minus: &mut Vec<i64>,
        out: &mut Vec<ResonanceTuple>,
    ) {
        if plus.len() < p {
            let lo = *plus.last().unwrap_or(&-self.bound);
            for j in self.sites().filter(|&j| j >= lo) {
                plus.push(j);
                self.extend(p, q, plus, minus, out);
                plus.pop();
            }
            return;
        }
        if minus.len() + 1 < q {
            let lo = *minus.last().unwrap_or(&-self.bound);
            for j in self.sites().filter(|&j| j >= lo) {
                minus.push(j);
                self.extend(p, q, plus, minus, out);
                minus.pop();
            }
            return;
        }
        let last = plus.iter().sum::<i64>() - minus.iter().sum::<i64>();
        if last == 0 || last.abs() > self.bound || minus.last().is_some_and(|&m| last < m) {
            return;
        }
        let freq: f64 = plus.iter().map(|&j| self.s(j)).sum::<f64>()
            - minus.iter().map(|&j| self.s(j)).sum::<f64>()
            - self.s(last);
        if freq.abs() > 1e-9 {
            return;
        }
        let mut sites = plus.clone();
        sites.extend(minus.iter().copied());
        sites.push(last);
        let signs = (0..p).map(|_| 1i8).chain((0..q).map(|_| -1i8)).collect();
        let t = ResonanceTuple { sites, signs };
        if t.frequency_holds() {
            out.push(t);
        }
    }
}

/// All resonant n-tuples with `|j_i| ≤ bound`, one canonical representative
/// per permutation/sign-flip class, sorted.
///
/// Tuples with all signs equal are never resonant (the frequency sum is
/// positive), so only `1 ≤ #minus ≤ #plus` sign patterns are searched.
pub fn enumerate_resonances(n: usize, bound: i64) -> Result<Vec<ResonanceTuple>> {
    if !(3..=6).contains(&n) {
        return Err(Error::InvalidInput(format!("resonance order must be in 3..=6, got {n}")));
    }
    if bound < 1 || bound > MAX_SITE_BOUND {
        return Err(Error::BoundExceeded(format!(
            "site bound {bound} outside 1..={MAX_SITE_BOUND}"
        )));
    }
    let sqrt: Vec<f64> = (-bound..=bound).map(|j| (j.unsigned_abs() as f64).sqrt()).collect();
    let en = Enumerator { bound, sqrt: &sqrt };
    let mut found = BTreeSet::new();
    for p in n.div_ceil(2)..n {
        let q = n - p;
        let chunks: Vec<Vec<ResonanceTuple>> = en
            .sites()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|first| {
                let mut out = Vec::new();
                let mut plus = vec![first];
                let mut minus = Vec::with_capacity(q);
                en.extend(p, q, &mut plus, &mut minus, &mut out);
                out
            })
            .collect();
        for t in chunks.into_iter().flatten() {
            found.insert(t.canonical());
        }
    }
    Ok(found.into_iter().collect())
}

/// The Benjamin-Feir tuple
/// `(-λb², λ(b+1)², λ(b²+b+1)², λ(b+1)²b²)` with signs `(+, -, +, -)`.
pub fn benjamin_feir(lambda: i64, b: i64) -> Result<ResonanceTuple> {
    if lambda == 0 || b < 1 {
        return Err(Error::InvalidInput(format!("need λ ≠ 0 and b ≥ 1, got ({lambda}, {b})")));
    }
    let t = ResonanceTuple::new(
        vec![
            -lambda * b * b,
            lambda * (b + 1) * (b + 1),
            lambda * (b * b + b + 1) * (b * b + b + 1),
            lambda * (b + 1) * (b + 1) * b * b,
        ],
        vec![1, -1, 1, -1],
    )?;
    if !t.is_resonant() {
        return Err(Error::Consistency(format!("Benjamin-Feir tuple {t:?} is not resonant")));
    }
    Ok(t)
}

/// Distinct nonzero tangential sites; positive sites form `S⁺`, negative `S⁻`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TangentialSet {
    sites: Vec<i64>,
}

impl TangentialSet {
    /// Sites keep the given order, which fixes the order of `ω̄` and `𝚟`.
    pub fn new(sites: Vec<i64>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidInput("tangential set must be nonempty".into()));
        }
        if sites.contains(&0) {
            return Err(Error::InvalidInput("tangential sites must be nonzero".into()));
        }
        let distinct: BTreeSet<i64> = sites.iter().copied().collect();
        if distinct.len() != sites.len() {
            return Err(Error::InvalidInput("tangential sites must be distinct".into()));
        }
        if let Some(j) = sites.iter().find(|&&j| j > 0 && distinct.contains(&-j)) {
            return Err(Error::InvalidInput(format!("sites {j} and {} are opposite", -j)));
        }
        Ok(Self { sites })
    }

    pub fn nu(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[i64] {
        &self.sites
    }

    /// Velocity vector `𝚟 = (j̄_1, …, j̄_ν)`.
    pub fn velocity(&self) -> &[i64] {
        &self.sites
    }

    /// `ω̄ = (√|j̄_1|, …, √|j̄_ν|)`.
    pub fn linear_frequencies(&self) -> Vec<f64> {
        self.sites.iter().map(|j| (j.unsigned_abs() as f64).sqrt()).collect()
    }

    pub fn positive(&self) -> Vec<i64> {
        self.sites.iter().copied().filter(|&j| j > 0).collect()
    }

    pub fn negative(&self) -> Vec<i64> {
        self.sites.iter().copied().filter(|&j| j < 0).collect()
    }
}

/// Record of the checks behind an accepted tangential set.
#[derive(Clone, Debug, Serialize)]
pub struct SiteCertificate {
    pub candidates_tried: usize,
    pub lmax: usize,
    /// Number of `ℓ ≠ 0` with `|ℓ|_∞ ≤ lmax` for which `ω̄·ℓ ≠ 0` was verified.
    pub ell_checked: usize,
    /// `(site, a, d)` with `√|site| = a√d`.
    pub kernels: Vec<(i64, u64, u64)>,
    pub twist_determinant: f64,
}

/// First `ℓ` with `0 < |ℓ|_∞ ≤ lmax` and `ω̄·ℓ = 0` exactly, if any.
pub fn linear_resonance(sites: &[i64], lmax: usize) -> (Option<Vec<i64>>, usize) {
    let omega: Vec<f64> = sites.iter().map(|j| (j.unsigned_abs() as f64).sqrt()).collect();
    let mut checked = 0;
    for ell in multi_indices(sites.len(), lmax) {
        if ell.iter().all(|&l| l == 0) {
            continue;
        }
        checked += 1;
        let f: f64 = omega.iter().zip(&ell).map(|(w, &l)| w * l as f64).sum();
        if f.abs() < 1e-9 && sqrt_combination_is_zero(sites, &ell) {
            return (Some(ell), checked);
        }
    }
    (None, checked)
}

/// Checks one candidate set; `Ok(None)` means rejected.
pub fn certify_sites(s: &TangentialSet, lmax: usize) -> Result<Option<SiteCertificate>> {
    let (res, checked) = linear_resonance(s.sites(), lmax);
    if res.is_some() {
        return Ok(None);
    }
    let det = twist_matrix(s).determinant();
    if det.abs() < 1e-12 {
        return Ok(None);
    }
    Ok(Some(SiteCertificate {
        candidates_tried: 1,
        lmax,
        ell_checked: checked,
        kernels: s
            .sites()
            .iter()
            .map(|&j| {
                let (a, d) = square_free_decomposition(j.unsigned_abs());
                (j, a, d)
            })
            .collect(),
        twist_determinant: det,
    }))
}

fn combinations(items: &[i64], k: usize) -> Vec<Vec<i64>> {
    if k == 0 {
        return vec![vec![]];
    }
    if items.len() < k {
        return vec![];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, x);
            out.push(rest);
        }
    }
    out
}

/// Searches `site_range` for a tangential set of size `ν` whose linear
/// frequencies have no integer relation with `|ℓ|_∞ ≤ lmax` and whose twist
/// matrix is nonsingular. Candidates are tried by increasing `max |j|`, then
/// lexicographically.
pub fn generic_sites_search(
    nu: usize,
    site_range: RangeInclusive<i64>,
    lmax: usize,
) -> Result<(TangentialSet, SiteCertificate)> {
    if nu == 0 {
        return Err(Error::InvalidInput("ν must be at least 1".into()));
    }
    let mut pool: Vec<i64> = site_range.filter(|&j| j != 0).collect();
    pool.sort_by_key(|&j| (j.abs(), j));
    let mut candidates = combinations(&pool, nu);
    candidates.sort_by_key(|c| (c.iter().map(|j| j.abs()).max().unwrap_or(0), c.clone()));
    let mut tried = 0;
    for c in candidates {
        let Ok(s) = TangentialSet::new(c) else { continue };
        tried += 1;
        if let Some(mut cert) = certify_sites(&s, lmax)? {
            cert.candidates_tried = tried;
            return Ok((s, cert));
        }
    }
    Err(Error::Exhausted { candidates: tried })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_free() {
        assert_eq!(square_free_decomposition(1), (1, 1));
        assert_eq!(square_free_decomposition(8), (2, 2));
        assert_eq!(square_free_decomposition(72), (6, 2));
        assert_eq!(square_free_decomposition(49), (7, 1));
        assert_eq!(square_free_decomposition(4999), (1, 4999));
    }

    #[test]
    fn sqrt_combinations() {
        assert!(sqrt_combination_is_zero(&[2, 8], &[2, -1]));
        assert!(!sqrt_combination_is_zero(&[1, 4], &[1, -2]));
        assert!(sqrt_combination_is_zero(&[3, 5], &[0, 0]));
        assert!(sqrt_combination_is_zero(&[-1, 4, 9, 4], &[1, -1, 1, -1]));
    }

    #[test]
    fn no_three_wave_resonances_small() {
        assert!(enumerate_resonances(3, 200).unwrap().is_empty());
    }

    #[test]
    fn four_wave_small_box() {
        let r = enumerate_resonances(4, 10).unwrap();
        let bf = ResonanceTuple::new(vec![-1, 4, 9, 4], vec![1, -1, 1, -1]).unwrap().canonical();
        assert!(r.contains(&bf));
        for j in 1..=10i64 {
            for k in 1..=10i64 {
                let t = ResonanceTuple::new(vec![j, j, k, k], vec![1, -1, 1, -1]).unwrap().canonical();
                assert!(r.contains(&t), "missing trivial ({j},{j},{k},{k})");
            }
        }
        assert!(r.iter().all(ResonanceTuple::is_resonant));
    }

    #[test]
    fn triviality() {
        let t = ResonanceTuple::new(vec![5, 5, 7, 7], vec![1, -1, 1, -1]).unwrap();
        assert!(is_trivial(&t));
        let bf = ResonanceTuple::new(vec![-1, 4, 9, 4], vec![1, -1, 1, -1]).unwrap();
        assert!(!is_trivial(&bf));
        let odd = ResonanceTuple::new(vec![1, 1, 2], vec![1, -1, 1]).unwrap();
        assert!(!is_trivial(&odd));
    }

    #[test]
    fn benjamin_feir_examples() {
        assert_eq!(benjamin_feir(1, 1).unwrap().sites, vec![-1, 4, 9, 4]);
        assert_eq!(benjamin_feir(1, 2).unwrap().sites, vec![-4, 9, 49, 36]);
        assert_eq!(benjamin_feir(2, 1).unwrap().sites, vec![-2, 8, 18, 8]);
        assert!(benjamin_feir(-3, 4).unwrap().is_resonant());
        assert!(benjamin_feir(0, 1).is_err());
    }

    #[test]
    fn enumeration_guards() {
        assert!(matches!(enumerate_resonances(4, 5001), Err(Error::BoundExceeded(_))));
        assert!(enumerate_resonances(7, 10).is_err());
    }

    #[test]
    fn zero_site_rejected() {
        assert!(ResonanceTuple::new(vec![0, 1], vec![1, -1]).is_err());
    }

    #[test]
    fn tangential_set_validation() {
        assert!(TangentialSet::new(vec![1, -1]).is_err());
        assert!(TangentialSet::new(vec![2, 2]).is_err());
        assert!(TangentialSet::new(vec![0]).is_err());
        let s = TangentialSet::new(vec![1, -2, 3]).unwrap();
        assert_eq!(s.positive(), vec![1, 3]);
        assert_eq!(s.negative(), vec![-2]);
    }

    #[test]
    fn site_search() {
        let (s, _) = generic_sites_search(1, 5..=5, 10).unwrap();
        assert_eq!(s.sites(), &[5]);
        let bad = TangentialSet::new(vec![1, 4]).unwrap();
        assert!(certify_sites(&bad, 10).unwrap().is_none());
        assert_eq!(linear_resonance(&[1, 4], 2).0, Some(vec![-2, 1]));
        let good = TangentialSet::new(vec![1, 2]).unwrap();
        let cert = certify_sites(&good, 10).unwrap().unwrap();
        assert_eq!(cert.ell_checked, 21 * 21 - 1);
        let (found, _) = generic_sites_search(2, 1..=4, 10).unwrap();
        assert_eq!(found.sites(), &[1, 2]);
        assert!(matches!(
            generic_sites_search(2, 1..=1, 10),
            Err(Error::Exhausted { .. })
        ));
    }
}
