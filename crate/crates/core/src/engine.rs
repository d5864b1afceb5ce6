//! Abelian-stack semantics on the square lattice: the stack Laplacian,
//! single firings, the step-by-step reference simulator and the odometer
//! verifier ("no hills, no holes, no cycles").

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

use crate::lattice::{Direction, Field, IntField, Site};
use crate::stacks::RotorStacks;

/// Chips per site; negative values are holes of that depth.
pub type ChipConfig = IntField;
/// Firings per site.
pub type Odometer = IntField;

/// Rotors on top of the stacks over a box. Stored as `direction index + 1`,
/// zero outside the computed region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RotorConfig(pub Field<u8>);

impl RotorConfig {
    pub fn get(&self, s: Site) -> Option<Direction> {
        match self.0.get(s) {
            0 => None,
            v => Some(Direction::from_index(usize::from(v - 1))),
        }
    }

    pub fn half(&self) -> i32 {
        self.0.half()
    }
}

/// `Top_ρ(u)(x) = ρ_{u(x)}(x)` for every site of `[-half, half]²`.
pub fn top_rotors<S: RotorStacks + ?Sized>(u: &Odometer, stacks: &mut S, half: i32) -> RotorConfig {
    let mut f: Field<u8> = Field::new(half);
    for i in 0..f.data().len() {
        let s = f.site_of(i);
        let d = stacks.rotor(s, u.get(s) as u64);
        f.data_mut()[i] = d as u8 + 1;
    }
    RotorConfig(f)
}

/// `Δ_ρ u(x) = Σ_{t(e)=x} R(e, u(s(e))) - u(x)`.
pub fn stack_laplacian<S: RotorStacks + ?Sized>(u: &Odometer, stacks: &mut S) -> IntField {
    let mut out: IntField = Field::new(u.half() + 1);
    for (s, v) in u.support() {
        assert!(v > 0, "odometer must be nonnegative (u{s} = {v})");
        let c = stacks.counts(s, v as u64);
        out.update(s, |x| x - v);
        for d in Direction::ALL {
            out.update(s.neighbor(d), |x| x + c[d.index()] as i64);
        }
    }
    out
}

/// Pointwise sum of two integer fields.
pub fn add_fields(a: &IntField, b: &IntField) -> IntField {
    let mut out = a.clone();
    out.grow_to(b.half());
    for (s, v) in b.support() {
        out.update(s, |x| x + v);
    }
    out
}

/// Chips and odometer evolving together under firing and unfiring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    pub sigma: ChipConfig,
    pub odo: Odometer,
}

impl Config {
    pub fn new(sigma0: ChipConfig) -> Self {
        let half = sigma0.half();
        Config { sigma: sigma0, odo: Field::new(half) }
    }

    /// Fires `x`: advances its stack and moves one chip along the new top.
    /// Legality is the caller's concern.
    pub fn fire<S: RotorStacks + ?Sized>(&mut self, stacks: &mut S, x: Site) -> Site {
        let k = self.odo.get(x) + 1;
        self.odo.set(x, k);
        let t = x.neighbor(stacks.rotor(x, k as u64));
        self.sigma.update(x, |v| v - 1);
        self.sigma.update(t, |v| v + 1);
        t
    }

    /// Undoes the last firing of `x`: pulls one chip back from the target
    /// of its top rotor, then lowers the odometer.
    ///
    /// # Panics
    /// If `x` has never fired.
    pub fn unfire<S: RotorStacks + ?Sized>(&mut self, stacks: &mut S, x: Site) -> Site {
        let k = self.odo.get(x);
        assert!(k >= 1, "unfire at {x} with zero odometer");
        let t = x.neighbor(stacks.rotor(x, k as u64));
        self.sigma.update(t, |v| v - 1);
        self.sigma.update(x, |v| v + 1);
        self.odo.set(x, k - 1);
        t
    }

    pub fn total_chips(&self) -> i64 {
        self.sigma.data().iter().sum()
    }

    /// Smallest Chebyshev radius containing every site with chips or firings.
    pub fn extent(&self) -> i32 {
        self.sigma.support_radius().unwrap_or(0).max(self.odo.support_radius().unwrap_or(0))
    }
}

/// Final state of a growth process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub odometer: Odometer,
    pub chips: ChipConfig,
    pub rotors: RotorConfig,
}

impl Outcome {
    pub fn from_config<S: RotorStacks + ?Sized>(cfg: Config, stacks: &mut S) -> Self {
        let half = cfg.extent() + 1;
        let mut chips = cfg.sigma;
        let mut odometer = cfg.odo;
        chips.resize(half);
        odometer.resize(half);
        let rotors = top_rotors(&odometer, stacks, half);
        Outcome { odometer, chips, rotors }
    }

    /// Sites holding a chip.
    pub fn occupied(&self) -> impl Iterator<Item = Site> + '_ {
        self.chips.support().filter(|(_, v)| *v == 1).map(|(s, _)| s)
    }
}

/// Runs legal firings (sites holding at least two chips) until none remain,
/// processing unstable sites first-in first-out.
pub fn oracle_simulate<S: RotorStacks + ?Sized>(stacks: &mut S, sigma0: &ChipConfig) -> Outcome {
    let mut cfg = Config::new(sigma0.clone());
    let mut queue: VecDeque<Site> = cfg.sigma.support().filter(|(_, v)| *v > 1).map(|(s, _)| s).collect();
    while let Some(x) = queue.pop_front() {
        while cfg.sigma.get(x) > 1 {
            let t = cfg.fire(stacks, x);
            if cfg.sigma.get(t) == 2 {
                queue.push_back(t);
            }
        }
    }
    Outcome::from_config(cfg, stacks)
}

/// Reference simulator with a caller-chosen firing order: `pick(len)`
/// selects which of the currently unstable sites fires next.
pub fn oracle_simulate_by<S: RotorStacks + ?Sized>(
    stacks: &mut S,
    sigma0: &ChipConfig,
    mut pick: impl FnMut(usize) -> usize,
) -> Outcome {
    let mut cfg = Config::new(sigma0.clone());
    let mut unstable: Vec<Site> = cfg.sigma.support().filter(|(_, v)| *v > 1).map(|(s, _)| s).collect();
    while !unstable.is_empty() {
        let i = pick(unstable.len()) % unstable.len();
        let x = unstable[i];
        let t = cfg.fire(stacks, x);
        if cfg.sigma.get(x) <= 1 {
            unstable.swap_remove(i);
        }
        if cfg.sigma.get(t) == 2 {
            unstable.push(t);
        }
    }
    Outcome::from_config(cfg, stacks)
}

/// Result of checking a candidate odometer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    /// A site ending with more than one chip.
    HillAt(Site),
    /// A site ending with fewer chips than required (one if it fired, zero otherwise).
    HoleAt(Site),
    /// A directed cycle of top rotors inside the set of sites that fired.
    Cycle(Vec<Site>),
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Ok => f.write_str("ok"),
            Verdict::HillAt(s) => write!(f, "hill at {s}"),
            Verdict::HoleAt(s) => write!(f, "hole at {s}"),
            Verdict::Cycle(c) => {
                f.write_str("cycle")?;
                for s in c {
                    write!(f, " {s}")?;
                }
                Ok(())
            }
        }
    }
}

/// Checks whether `u` is the odometer of `sigma0`: with `σ = σ0 + Δ_ρ u`,
/// no site may hold more than one chip, every site that fired must hold
/// exactly one, and the top rotors must be acyclic on the sites that fired.
/// Witnesses are the lexicographically smallest offending sites.
pub fn verify_odometer<S: RotorStacks + ?Sized>(u: &Odometer, sigma0: &ChipConfig, stacks: &mut S) -> Verdict {
    let lap = stack_laplacian(u, stacks);
    let sigma = add_fields(sigma0, &lap);

    if let Some((s, _)) = sigma.support().filter(|(_, v)| *v > 1).min_by_key(|(s, _)| *s) {
        return Verdict::HillAt(s);
    }
    let h = sigma.half().max(u.half());
    let mut hole: Option<Site> = None;
    for y in -h..=h {
        for x in -h..=h {
            let s = Site::new(x, y);
            let need = i64::from(u.get(s) > 0);
            if sigma.get(s) < need && hole.is_none_or(|m| s < m) {
                hole = Some(s);
            }
        }
    }
    if let Some(s) = hole {
        return Verdict::HoleAt(s);
    }
    match find_top_cycle(u, stacks) {
        Some(c) => Verdict::Cycle(c),
        None => Verdict::Ok,
    }
}

/// Finds a directed cycle of `Top_ρ(u)` restricted to `supp(u)`, returning
/// the cycle whose smallest site is smallest, rotated to start there.
pub fn find_top_cycle<S: RotorStacks + ?Sized>(u: &Odometer, stacks: &mut S) -> Option<Vec<Site>> {
    // 0 = unvisited, 1 = on current path, 2 = done.
    let mut mark: Field<u8> = Field::new(u.half());
    let mut best: Option<Vec<Site>> = None;
    let mut path: Vec<Site> = Vec::new();
    let starts: Vec<Site> = u.support().map(|(s, _)| s).collect();
    for start in starts {
        if mark.get(start) != 0 {
            continue;
        }
        path.clear();
        let mut cur = start;
        loop {
            if u.get(cur) <= 0 || mark.get(cur) == 2 {
                break;
            }
            if mark.get(cur) == 1 {
                let pos = path.iter().position(|s| *s == cur).unwrap();
                let mut cyc: Vec<Site> = path[pos..].to_vec();
                let m = cyc.iter().enumerate().min_by_key(|(_, s)| **s).map(|(i, _)| i).unwrap();
                cyc.rotate_left(m);
                if best.as_ref().is_none_or(|b| cyc[0] < b[0]) {
                    best = Some(cyc);
                }
                break;
            }
            mark.set(cur, 1);
            path.push(cur);
            cur = cur.neighbor(stacks.rotor(cur, u.get(cur) as u64));
        }
        for s in &path {
            mark.set(*s, 2);
        }
    }
    best
}

/// `N` chips at the origin.
pub fn point_mass(n: u64) -> ChipConfig {
    let mut f: ChipConfig = Field::new(0);
    f.set(Site::ORIGIN, n as i64);
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prf::Key;
    use crate::stacks::{IdlaStack, LowDiscrepancyStack, PeriodicStack, RotorSequence, Shifted, StackModel};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn periodic() -> PeriodicStack {
        PeriodicStack::new(RotorSequence::WNES)
    }

    #[test]
    fn single_chip_is_absorbed() {
        let out = oracle_simulate(&mut periodic(), &point_mass(1));
        assert!(out.odometer.support().next().is_none());
        assert_eq!(out.occupied().collect::<Vec<_>>(), alloc::vec![Site::ORIGIN]);
    }

    #[test]
    fn five_chips_fill_the_plus() {
        // Hand execution: the origin fires four times, once in each direction.
        for seq in RotorSequence::CLASSIC.dihedral_variants() {
            let out = oracle_simulate(&mut PeriodicStack::new(seq), &point_mass(5));
            assert_eq!(out.odometer.get(Site::ORIGIN), 4);
            assert_eq!(out.odometer.support().count(), 1);
            let mut occ: Vec<Site> = out.occupied().collect();
            occ.sort();
            let mut want = alloc::vec![Site::ORIGIN];
            want.extend(Direction::ALL.iter().map(|d| Site::ORIGIN.neighbor(*d)));
            want.sort();
            assert_eq!(occ, want);
        }
    }

    #[test]
    fn fire_sends_first_chip_north_for_wnes() {
        let mut cfg = Config::new(point_mass(2));
        let mut st = periodic();
        let t = cfg.fire(&mut st, Site::ORIGIN);
        assert_eq!(t, Site::new(0, 1));
        assert_eq!(cfg.odo.get(Site::ORIGIN), 1);
        assert_eq!(cfg.sigma.get(Site::new(0, 1)), 1);
        assert_eq!(cfg.total_chips(), 2);
    }

    #[test]
    fn fire_then_unfire_restores() {
        let mut cfg = Config::new(point_mass(3));
        let before = cfg.clone();
        let mut st = periodic();
        cfg.fire(&mut st, Site::ORIGIN);
        cfg.unfire(&mut st, Site::ORIGIN);
        assert!(crate::lattice::same_function(&cfg.sigma, &before.sigma));
        assert!(crate::lattice::same_function(&cfg.odo, &before.odo));
    }

    #[test]
    fn four_fires_feed_each_neighbor_once() {
        let mut cfg = Config::new(point_mass(4));
        let mut st = periodic();
        for _ in 0..4 {
            cfg.fire(&mut st, Site::ORIGIN);
        }
        for d in Direction::ALL {
            assert_eq!(cfg.sigma.get(Site::ORIGIN.neighbor(d)), 1);
        }
        assert_eq!(cfg.sigma.get(Site::ORIGIN), 0);
    }

    #[test]
    fn unfire_fills_a_hole() {
        let mut st = periodic();
        let mut sigma: ChipConfig = Field::new(2);
        sigma.set(Site::ORIGIN, -1);
        let mut cfg = Config::new(sigma);
        cfg.odo.set(Site::ORIGIN, 1);
        let src = cfg.unfire(&mut st, Site::ORIGIN);
        assert_eq!(src, Site::new(0, 1));
        assert_eq!(cfg.sigma.get(Site::ORIGIN), 0);
        assert_eq!(cfg.sigma.get(Site::new(0, 1)), -1);
        assert_eq!(cfg.odo.get(Site::ORIGIN), 0);
    }

    #[test]
    #[should_panic(expected = "zero odometer")]
    fn unfire_requires_a_firing() {
        let mut cfg = Config::new(point_mass(1));
        cfg.unfire(&mut periodic(), Site::ORIGIN);
    }

    #[test]
    fn unfiring_a_rotor_cycle_moves_no_chips() {
        // WNES: after one firing the top is N, after three it is S.
        let mut st = periodic();
        let mut cfg = Config::new(Field::new(2));
        let a = Site::ORIGIN;
        let b = Site::new(0, 1);
        cfg.odo.set(a, 1);
        cfg.odo.set(b, 3);
        let before = cfg.sigma.clone();
        cfg.unfire(&mut st, a);
        cfg.unfire(&mut st, b);
        assert!(crate::lattice::same_function(&cfg.sigma, &before));
    }

    #[test]
    fn laplacian_of_zero_is_zero() {
        let u: Odometer = Field::new(3);
        assert!(stack_laplacian(&u, &mut periodic()).support().next().is_none());
    }

    fn random_model(rng: &mut StdRng) -> StackModel {
        let key = Key(rng.random());
        match rng.random_range(0..3) {
            0 => {
                let v = RotorSequence::CLASSIC.dihedral_variants();
                StackModel::Periodic(PeriodicStack::new(v[rng.random_range(0..8)]))
            }
            1 => StackModel::Idla(IdlaStack::new(key, rng.random_range(1..100), 0.0)),
            _ => StackModel::LowDiscrepancy(LowDiscrepancyStack::new(key, rng.random_range(1..100))),
        }
    }

    fn random_sigma(rng: &mut StdRng) -> ChipConfig {
        let mut s: ChipConfig = Field::new(4);
        for _ in 0..rng.random_range(1..4) {
            let site = Site::new(rng.random_range(-3..=3), rng.random_range(-3..=3));
            let n = rng.random_range(1..=170);
            s.update(site, |v| v + n);
        }
        s
    }

    #[test]
    fn laplacian_matches_sequential_firing() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..30 {
            let mut st = random_model(&mut rng);
            let mut cfg = Config::new(random_sigma(&mut rng));
            let sigma0 = cfg.sigma.clone();
            for _ in 0..rng.random_range(0..400) {
                let s = Site::new(rng.random_range(-4..=4), rng.random_range(-4..=4));
                cfg.fire(&mut st, s);
            }
            let lap = stack_laplacian(&cfg.odo, &mut st);
            assert!(crate::lattice::same_function(&add_fields(&sigma0, &lap), &cfg.sigma));
        }
    }

    #[test]
    fn abelian_property_over_random_orders() {
        let mut rng = StdRng::seed_from_u64(12);
        for _ in 0..100 {
            let model = random_model(&mut rng);
            let sigma0 = random_sigma(&mut rng);
            let fifo = oracle_simulate(&mut model.clone(), &sigma0);
            let mut r2 = StdRng::seed_from_u64(rng.random());
            let shuffled = oracle_simulate_by(&mut model.clone(), &sigma0, |n| r2.random_range(0..n));
            assert_eq!(fifo, shuffled);
            assert_eq!(fifo.chips.data().iter().sum::<i64>(), sigma0.data().iter().sum::<i64>());
        }
    }

    #[test]
    fn skew_linearity() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..40 {
            let mut st = random_model(&mut rng);
            let mut u: Odometer = Field::new(3);
            let mut v: Odometer = Field::new(3);
            for s in u.sites().collect::<Vec<_>>() {
                u.set(s, rng.random_range(0..30));
                v.set(s, rng.random_range(0..30));
            }
            let sum = add_fields(&u, &v);
            let lhs = stack_laplacian(&sum, &mut st);
            let lu = stack_laplacian(&u, &mut st);
            let lv = stack_laplacian(&v, &mut Shifted { base: &mut st, shift: &u });
            assert!(crate::lattice::same_function(&lhs, &add_fields(&lu, &lv)));
        }
    }

    #[test]
    fn verifier_accepts_oracle_and_rejects_perturbations() {
        let mut rng = StdRng::seed_from_u64(14);
        for _ in 0..40 {
            let mut st = random_model(&mut rng);
            let sigma0 = random_sigma(&mut rng);
            let out = oracle_simulate(&mut st, &sigma0);
            assert_eq!(verify_odometer(&out.odometer, &sigma0, &mut st), Verdict::Ok);
            let occ: Vec<Site> = out.occupied().collect();
            let x0 = occ[rng.random_range(0..occ.len())];
            let mut bad = out.odometer.clone();
            bad.update(x0, |v| v + 1);
            assert!(!verify_odometer(&bad, &sigma0, &mut st).is_ok());
        }
    }

    #[test]
    fn verifier_trivial_cases() {
        let u: Odometer = Field::new(0);
        assert_eq!(verify_odometer(&u, &point_mass(1), &mut periodic()), Verdict::Ok);
        assert_eq!(verify_odometer(&u, &point_mass(2), &mut periodic()), Verdict::HillAt(Site::ORIGIN));
        let mut u1: Odometer = Field::new(1);
        u1.set(Site::ORIGIN, 1);
        // One chip fired north from a single chip: the origin is left empty.
        assert_eq!(verify_odometer(&u1, &point_mass(1), &mut periodic()), Verdict::HoleAt(Site::ORIGIN));
    }

    #[test]
    fn verifier_reports_rotor_cycle() {
        // Two adjacent sites pointing at each other, both holding one chip.
        let mut st = periodic();
        let a = Site::ORIGIN;
        let b = Site::new(0, 1);
        let mut u: Odometer = Field::new(2);
        u.set(a, 1); // top N -> b
        u.set(b, 3); // top S -> a
        let lap = stack_laplacian(&u, &mut st);
        let mut sigma0: ChipConfig = Field::new(3);
        for s in lap.sites().collect::<Vec<_>>() {
            let need = i64::from(u.get(s) > 0);
            sigma0.set(s, need - lap.get(s));
        }
        assert_eq!(verify_odometer(&u, &sigma0, &mut st), Verdict::Cycle(alloc::vec![a, b]));
    }
}
