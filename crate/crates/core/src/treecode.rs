//! Tree encoder and stage-wise tree decoder.
//!
//! A fragment is the J-bit word `w(j) ‖ p(j)` read as an integer with the
//! first information bit most significant. The same integer is the column
//! index used by the compressed sensing stage, so the decoder works directly on
//! list entries.

use crate::error::{CcsError, Result};
use crate::gf2::{matvec_mod2, sample_rademacher, BitMatrix, BitVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

pub type Fragment = u64;
pub type Message = BitVector;

/// Longest sub-block the `u64` fragment representation allows.
pub const MAX_J: usize = 63;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParityProfile {
    j: usize,
    m: Vec<usize>,
    l: Vec<usize>,
}

impl ParityProfile {
    pub fn new(j: usize, m: Vec<usize>, l: Vec<usize>) -> Result<Self> {
        let bad = |s: String| Err(CcsError::InvalidProfile(s));
        if j == 0 || j > MAX_J {
            return bad(format!("J={j} must be in 1..={MAX_J}"));
        }
        if m.is_empty() || m.len() != l.len() {
            return bad(format!("m has {} entries, l has {}", m.len(), l.len()));
        }
        if m[0] != j || l[0] != 0 {
            return bad("the first sub-block must carry J information bits".into());
        }
        if let Some(i) = (0..m.len()).find(|&i| m[i] + l[i] != j) {
            return bad(format!("m[{i}] + l[{i}] = {} != J = {j}", m[i] + l[i]));
        }
        Ok(ParityProfile { j, m, l })
    }

    /// Profile from the parity counts of sub-blocks `1..n` (sub-block 0 has none).
    pub fn from_parity(j: usize, tail: &[usize]) -> Result<Self> {
        if let Some(&x) = tail.iter().find(|&&x| x > j) {
            return Err(CcsError::InvalidProfile(format!("l={x} exceeds J={j}")));
        }
        let l: Vec<usize> = std::iter::once(0).chain(tail.iter().copied()).collect();
        let m = l.iter().map(|&x| j - x).collect();
        Self::new(j, m, l)
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn m(&self) -> &[usize] {
        &self.m
    }

    pub fn l(&self) -> &[usize] {
        &self.l
    }

    /// Parity counts of sub-blocks `1..n`.
    pub fn parity_tail(&self) -> &[usize] {
        &self.l[1..]
    }

    /// Message length B.
    pub fn b(&self) -> usize {
        self.m.iter().sum()
    }

    /// Coded length M = nJ.
    pub fn total_bits(&self) -> usize {
        self.n() * self.j
    }
}

/// Shared generator blocks of the tree code.
#[derive(Debug, Clone)]
pub struct TreeCodebook {
    profile: ParityProfile,
    // generators[j][ℓ] is the m[ℓ] x l[j] block feeding stage j (gen[0] is empty).
    generators: Vec<Vec<BitMatrix>>,
    // masks[j][ℓ][b]: row of generators[j][ℓ] selected by integer bit b of w(ℓ).
    masks: Vec<Vec<Vec<u64>>>,
}

impl TreeCodebook {
    pub fn sample<R: Rng + ?Sized>(profile: ParityProfile, rng: &mut R) -> Self {
        let (m, l) = (profile.m.clone(), profile.l.clone());
        Self::with_generators(profile, |ell, j| sample_rademacher(m[ell], l[j], rng)).expect("sampled shapes match")
    }

    /// Builds a codebook from `gen(ℓ, j)`, called for `0 <= ℓ < j < n` in that order.
    pub fn with_generators<F>(profile: ParityProfile, mut gen: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> BitMatrix,
    {
        let n = profile.n();
        let mut generators = vec![Vec::new()];
        let mut masks = vec![Vec::new()];
        for j in 1..n {
            let mut gs = Vec::with_capacity(j);
            let mut ms = Vec::with_capacity(j);
            for ell in 0..j {
                let g = gen(ell, j);
                if g.rows() != profile.m[ell] || g.cols() != profile.l[j] {
                    return Err(CcsError::InvalidProfile(format!(
                        "generator ({ell},{j}) is {}x{}, expected {}x{}",
                        g.rows(),
                        g.cols(),
                        profile.m[ell],
                        profile.l[j]
                    )));
                }
                let rows = g.rows();
                ms.push((0..rows).map(|b| g.row_u64_msb(rows - 1 - b)).collect());
                gs.push(g);
            }
            generators.push(gs);
            masks.push(ms);
        }
        Ok(TreeCodebook { profile, generators, masks })
    }

    pub fn profile(&self) -> &ParityProfile {
        &self.profile
    }

    /// The block mapping `w(ℓ)` into the parity of sub-block `j`.
    pub fn generator(&self, ell: usize, j: usize) -> &BitMatrix {
        &self.generators[j][ell]
    }

    fn info(&self, frag: Fragment, stage: usize) -> u64 {
        frag >> self.profile.l[stage]
    }

    /// Parity of stage `j` implied by the information parts of `prefix[0..j]`.
    fn expected_parity(&self, prefix: &[Fragment], j: usize) -> u64 {
        let mut acc = 0u64;
        for (ell, &f) in prefix[..j].iter().enumerate() {
            let rows = &self.masks[j][ell];
            let mut x = self.info(f, ell);
            while x != 0 {
                acc ^= rows[x.trailing_zeros() as usize];
                x &= x - 1;
            }
        }
        acc
    }

    /// Fragment integers of the codeword for `w` (the fast path of [`encode`]).
    pub fn encode_fragments(&self, w: &Message) -> Result<Vec<Fragment>> {
        let p = &self.profile;
        if w.len() != p.b() {
            return Err(CcsError::DimensionMismatch { expected: p.b(), got: w.len() });
        }
        let mut frags = Vec::with_capacity(p.n());
        let mut off = 0;
        for j in 0..p.n() {
            let info = w.slice(off, p.m[j]).to_u64_msb();
            off += p.m[j];
            frags.push(info << p.l[j]);
            let par = self.expected_parity(&frags, j);
            frags[j] |= par;
        }
        Ok(frags)
    }

    /// Message carried by a full path of fragments.
    pub fn message_from_fragments(&self, frags: &[Fragment]) -> Message {
        let p = &self.profile;
        let mut out = BitVector::zeros(0);
        for (j, &f) in frags.iter().enumerate() {
            for b in BitVector::from_u64_msb(self.info(f, j), p.m[j]).iter() {
                out.push(b);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codeword {
    pub fragments: Vec<BitVector>,
}

impl Codeword {
    pub fn indices(&self) -> Vec<Fragment> {
        self.fragments.iter().map(|f| f.to_u64_msb()).collect()
    }
}

/// Splits `w` into sub-blocks and appends parity computed with [`matvec_mod2`].
pub fn encode(w: &Message, code: &TreeCodebook) -> Result<Codeword> {
    let p = code.profile();
    if w.len() != p.b() {
        return Err(CcsError::DimensionMismatch { expected: p.b(), got: w.len() });
    }
    let mut infos = Vec::with_capacity(p.n());
    let mut off = 0;
    for &mj in p.m() {
        infos.push(w.slice(off, mj));
        off += mj;
    }
    let mut fragments = Vec::with_capacity(p.n());
    for j in 0..p.n() {
        let mut parity = BitVector::zeros(p.l()[j]);
        for (ell, info) in infos.iter().enumerate().take(j) {
            parity = parity.xor(&matvec_mod2(info, code.generator(ell, j))?)?;
        }
        fragments.push(infos[j].concat(&parity));
    }
    Ok(Codeword { fragments })
}

/// Whether fragment `j` of `path` carries the parity its predecessors imply.
pub fn check_parity_stage(path: &[BitVector], code: &TreeCodebook, j: usize) -> Result<bool> {
    let p = code.profile();
    if j == 0 || j >= p.n() || path.len() <= j {
        return Err(CcsError::StageOutOfRange { stage: j, max: p.n().saturating_sub(1) });
    }
    if let Some(f) = path[..=j].iter().find(|f| f.len() != p.j()) {
        return Err(CcsError::DimensionMismatch { expected: p.j(), got: f.len() });
    }
    let mut expected = BitVector::zeros(p.l()[j]);
    for (ell, frag) in path.iter().enumerate().take(j) {
        let info = frag.slice(0, p.m()[ell]);
        expected = expected.xor(&matvec_mod2(&info, code.generator(ell, j))?)?;
    }
    Ok(path[j].slice(p.m()[j], p.l()[j]) == expected)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeStats {
    /// Paths alive after each stage's check, summed over roots. Entry 0 counts roots.
    pub survivors_per_stage: Vec<u64>,
    /// Parity bits compared: every examined child costs `l[j]` checks.
    pub parity_checks: u64,
    /// Children examined, i.e. nodes whose parity had to be evaluated.
    pub nodes_visited: u64,
    /// Roots that ended with no surviving path.
    pub roots_dead: u64,
    /// Roots that ended with two or more surviving paths.
    pub roots_ambiguous: u64,
    /// Roots abandoned because they exceeded the path limit.
    pub roots_truncated: u64,
}

impl DecodeStats {
    pub fn add(&mut self, other: &DecodeStats) {
        if self.survivors_per_stage.len() < other.survivors_per_stage.len() {
            self.survivors_per_stage.resize(other.survivors_per_stage.len(), 0);
        }
        for (a, b) in self.survivors_per_stage.iter_mut().zip(&other.survivors_per_stage) {
            *a += b;
        }
        self.parity_checks += other.parity_checks;
        self.nodes_visited += other.nodes_visited;
        self.roots_dead += other.roots_dead;
        self.roots_ambiguous += other.roots_ambiguous;
        self.roots_truncated += other.roots_truncated;
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DecodeOptions {
    /// Abandon a root once it holds more partial paths than this.
    pub path_limit: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub messages: BTreeSet<Message>,
    /// Surviving full-path count for each root, in list order.
    pub root_survivors: Vec<usize>,
    pub stats: DecodeStats,
}

pub fn tree_decode<L: AsRef<[Fragment]>>(lists: &[L], code: &TreeCodebook) -> Result<DecodeOutput> {
    tree_decode_with(lists, code, DecodeOptions::default())
}

/// Stitches per-slot lists into messages.
///
/// Lists may repeat entries; repeats are treated as distinct children, which
/// matches the model in which every user contributes its own list entry.
pub fn tree_decode_with<L: AsRef<[Fragment]>>(
    lists: &[L],
    code: &TreeCodebook,
    opts: DecodeOptions,
) -> Result<DecodeOutput> {
    let p = code.profile();
    let n = p.n();
    if lists.len() != n {
        return Err(CcsError::DimensionMismatch { expected: n, got: lists.len() });
    }
    let limit = 1u64 << p.j();
    for list in lists {
        if let Some(&f) = list.as_ref().iter().find(|&&f| f >= limit) {
            return Err(CcsError::Domain(format!("fragment {f} has more than J={} bits", p.j())));
        }
    }

    // Children of each stage keyed by their parity bits.
    let index: Vec<HashMap<u64, Vec<Fragment>>> = (0..n)
        .map(|j| {
            let mask = (1u64 << p.l()[j]) - 1;
            let mut h: HashMap<u64, Vec<Fragment>> = HashMap::new();
            for &f in lists[j].as_ref() {
                h.entry(f & mask).or_default().push(f);
            }
            h
        })
        .collect();

    let mut stats = DecodeStats { survivors_per_stage: vec![0; n], ..Default::default() };
    let mut messages = BTreeSet::new();
    let mut root_survivors = Vec::with_capacity(lists[0].as_ref().len());

    for &root in lists[0].as_ref() {
        stats.survivors_per_stage[0] += 1;
        let mut paths: Vec<Vec<Fragment>> = vec![vec![root]];
        let mut truncated = false;
        for j in 1..n {
            let width = lists[j].as_ref().len() as u64;
            let mut next = Vec::new();
            for path in &paths {
                stats.nodes_visited += width;
                stats.parity_checks += width * p.l()[j] as u64;
                let want = code.expected_parity(path, j);
                if let Some(children) = index[j].get(&want) {
                    for &c in children {
                        let mut ext = Vec::with_capacity(n);
                        ext.extend_from_slice(path);
                        ext.push(c);
                        next.push(ext);
                    }
                }
            }
            stats.survivors_per_stage[j] += next.len() as u64;
            paths = next;
            if opts.path_limit.is_some_and(|cap| paths.len() > cap) {
                truncated = true;
                paths.clear();
                break;
            }
            if paths.is_empty() {
                break;
            }
        }
        root_survivors.push(paths.len());
        match paths.len() {
            1 => {
                messages.insert(code.message_from_fragments(&paths[0]));
            }
            0 if truncated => stats.roots_truncated += 1,
            0 => stats.roots_dead += 1,
            _ => stats.roots_ambiguous += 1,
        }
    }
    Ok(DecodeOutput { messages, root_survivors, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn toy() -> TreeCodebook {
        let p = ParityProfile::new(3, vec![3, 1], vec![0, 2]).unwrap();
        TreeCodebook::with_generators(p, |_, _| BitMatrix::ones(3, 2)).unwrap()
    }

    #[test]
    fn profile_validation() {
        assert!(ParityProfile::new(3, vec![2, 1], vec![1, 2]).is_err());
        assert!(ParityProfile::new(3, vec![3, 2], vec![0, 2]).is_err());
        assert!(ParityProfile::from_parity(4, &[5]).is_err());
        let p = ParityProfile::from_parity(15, &[9; 10]).unwrap();
        assert_eq!((p.n(), p.b(), p.total_bits()), (11, 75, 165));
    }

    #[test]
    fn encode_hand_example() {
        let code = toy();
        let cw = encode(&BitVector::parse("1011"), &code).unwrap();
        assert_eq!(cw.fragments, vec![BitVector::parse("101"), BitVector::parse("100")]);
        assert_eq!(cw.indices(), code.encode_fragments(&BitVector::parse("1011")).unwrap());
        assert!(encode(&BitVector::parse("101"), &code).is_err());
    }

    #[test]
    fn encode_zero_and_single_block() {
        let p = ParityProfile::from_parity(8, &[3, 5, 8]).unwrap();
        let code = TreeCodebook::sample(p.clone(), &mut seeded(4));
        let cw = encode(&BitVector::zeros(p.b()), &code).unwrap();
        assert!(cw.fragments.iter().all(|f| f.is_zero()));

        let p1 = ParityProfile::from_parity(6, &[]).unwrap();
        let c1 = TreeCodebook::sample(p1, &mut seeded(4));
        let w = BitVector::parse("110010");
        assert_eq!(encode(&w, &c1).unwrap().fragments, vec![w]);
    }

    #[test]
    fn parity_stage_checks() {
        let code = toy();
        let cw = encode(&BitVector::parse("1011"), &code).unwrap();
        assert!(check_parity_stage(&cw.fragments, &code, 1).unwrap());
        let bad = vec![cw.fragments[0].clone(), BitVector::parse("101")];
        assert!(!check_parity_stage(&bad, &code, 1).unwrap());
        assert!(check_parity_stage(&cw.fragments, &code, 0).is_err());
        assert!(check_parity_stage(&cw.fragments, &code, 2).is_err());

        let p = ParityProfile::from_parity(5, &[0, 2]).unwrap();
        let c = TreeCodebook::sample(p, &mut seeded(1));
        let mut rng = seeded(2);
        let path: Vec<BitVector> = (0..3).map(|_| BitVector::random(5, &mut rng)).collect();
        assert!(check_parity_stage(&path, &c, 1).unwrap());
    }

    #[test]
    fn decode_single_message() {
        let p = ParityProfile::from_parity(10, &[2, 4, 6, 10]).unwrap();
        let code = TreeCodebook::sample(p.clone(), &mut seeded(8));
        let w = BitVector::random(p.b(), &mut seeded(9));
        let frags = code.encode_fragments(&w).unwrap();
        let lists: Vec<Vec<u64>> = frags.iter().map(|&f| vec![f]).collect();
        let out = tree_decode(&lists, &code).unwrap();
        assert_eq!(out.messages.into_iter().collect::<Vec<_>>(), vec![w]);
        assert_eq!(out.stats.survivors_per_stage, vec![1; 5]);
        assert_eq!(out.stats.parity_checks, 22);
        assert_eq!(out.stats.nodes_visited, 4);
    }

    #[test]
    fn planted_collision_fails_only_its_root() {
        // Two messages share w(0), so that root sees two valid full paths.
        let p = ParityProfile::from_parity(6, &[0, 6]).unwrap();
        // Identity generators: root c can only adopt a foreign child if its
        // w(0) matched, which it does not.
        let code = TreeCodebook::with_generators(p.clone(), |ell, j| {
            if j == 2 {
                BitMatrix::identity(6)
            } else {
                BitMatrix::zeros(p.m()[ell], p.l()[j])
            }
        })
        .unwrap();
        let a = BitVector::parse("101100" /* w0 */).concat(&BitVector::parse("000000"));
        let b = BitVector::parse("101100").concat(&BitVector::parse("111111"));
        let c = BitVector::parse("011010").concat(&BitVector::parse("110001"));
        let fa = code.encode_fragments(&a).unwrap();
        let fb = code.encode_fragments(&b).unwrap();
        let fc = code.encode_fragments(&c).unwrap();
        assert_eq!(fa[0], fb[0]);
        let lists = vec![vec![fa[0], fc[0]], vec![fa[1], fb[1], fc[1]], vec![fa[2], fb[2], fc[2]]];
        let out = tree_decode(&lists, &code).unwrap();
        assert!(out.root_survivors[0] >= 2);
        assert_eq!(out.stats.roots_ambiguous, 1);
        assert!(out.messages.contains(&c));
        assert!(!out.messages.contains(&a) && !out.messages.contains(&b));
    }

    #[test]
    fn zero_parity_stage_fans_out() {
        let p = ParityProfile::from_parity(4, &[0, 4]).unwrap();
        let code = TreeCodebook::sample(p.clone(), &mut seeded(3));
        let mut rng = seeded(4);
        let ws: Vec<BitVector> = (0..3).map(|_| BitVector::random(p.b(), &mut rng)).collect();
        let frags: Vec<Vec<u64>> = ws.iter().map(|w| code.encode_fragments(w).unwrap()).collect();
        let lists: Vec<Vec<u64>> = (0..3).map(|j| frags.iter().map(|f| f[j]).collect()).collect();
        let out = tree_decode(&lists, &code).unwrap();
        assert_eq!(out.stats.survivors_per_stage[1], 9);
        // Every one of the 9 parents tests all 3 children on 4 bits.
        assert_eq!(out.stats.parity_checks, 9 * 3 * 4);
        assert_eq!(out.stats.nodes_visited, 9 + 27);
    }

    #[test]
    fn path_limit_abandons_root() {
        let p = ParityProfile::from_parity(4, &[0, 0, 4]).unwrap();
        let code = TreeCodebook::sample(p.clone(), &mut seeded(3));
        let lists: Vec<Vec<u64>> = (0..4).map(|_| (0..16).collect()).collect();
        let out = tree_decode_with(&lists, &code, DecodeOptions { path_limit: Some(100) }).unwrap();
        assert_eq!(out.stats.roots_truncated, 16);
        assert!(out.messages.is_empty());
    }

    proptest! {
        #[test]
        fn encoder_and_checker_agree(seed in any::<u64>(), tail in proptest::collection::vec(0usize..=12, 0..6)) {
            let p = ParityProfile::from_parity(12, &tail).unwrap();
            let mut rng = seeded(seed);
            let code = TreeCodebook::sample(p.clone(), &mut rng);
            let w = BitVector::random(p.b(), &mut rng);
            let cw = encode(&w, &code).unwrap();
            prop_assert_eq!(cw.indices(), code.encode_fragments(&w).unwrap());
            for j in 1..p.n() {
                prop_assert!(check_parity_stage(&cw.fragments, &code, j).unwrap());
            }
            prop_assert_eq!(code.message_from_fragments(&cw.indices()), w);
        }

        #[test]
        fn listed_messages_with_unique_paths_are_recovered(seed in any::<u64>(), k in 1usize..8) {
            let p = ParityProfile::from_parity(12, &[4, 6, 8, 12]).unwrap();
            let mut rng = seeded(seed);
            let code = TreeCodebook::sample(p.clone(), &mut rng);
            let ws: Vec<BitVector> = (0..k).map(|_| BitVector::random(p.b(), &mut rng)).collect();
            let frags: Vec<Vec<u64>> = ws.iter().map(|w| code.encode_fragments(w).unwrap()).collect();
            let lists: Vec<Vec<u64>> = (0..p.n()).map(|j| frags.iter().map(|f| f[j]).collect()).collect();
            let out = tree_decode(&lists, &code).unwrap();
            for (i, w) in ws.iter().enumerate() {
                if out.root_survivors[i] == 1 {
                    prop_assert!(out.messages.contains(w));
                }
            }
            let total: u64 = out.stats.survivors_per_stage[..p.n() - 1].iter().enumerate()
                .map(|(j, s)| s * lists[j + 1].len() as u64 * p.l()[j + 1] as u64).sum();
            prop_assert_eq!(out.stats.parity_checks, total);
        }
    }
}
