//! The fast solver: apply an approximate odometer in one shot, cancel the
//! resulting hills and holes on a sequence of coarsening grids, then unfire
//! rotor cycles until the top rotors are acyclic.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{point_mass, verify_odometer, ChipConfig, Config, Odometer, Outcome, Verdict};
use crate::lattice::{Direction, Field, IntField, Site};
use crate::potential::{approx_odometer, table_radius_for, ApproxParams, KernelTable};
use crate::stacks::RotorStacks;

/// Order in which a multiscale level scans the box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepOrder {
    /// Rows bottom to top, alternating direction.
    #[default]
    Boustrophedon,
    /// Rows top to bottom, alternating direction starting leftwards.
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Growth factor of the grid periods, `L_{i+1} = ⌈factor · L_i⌉`.
    pub factor: f64,
    pub approx: ApproxParams,
    /// Fire/unfire budget for annihilation before switching to the
    /// hills-first order; `None` means `64 · N · ln(N + 2)`.
    pub op_cap: Option<u64>,
    pub sweep: SweepOrder,
    /// Check the result against the odometer characterisation.
    pub verify: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            factor: 1.9,
            approx: ApproxParams::default(),
            op_cap: None,
            sweep: SweepOrder::Boustrophedon,
            verify: cfg!(debug_assertions),
        }
    }
}

/// Summary of one solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub chips: u64,
    /// `Σ |u1 - u|`.
    pub abs_err_u1: u64,
    /// `max |u1 - u|`.
    pub max_err_u1: u64,
    /// `max σ1` after applying `u1`.
    pub highest_hill: i64,
    /// `min σ1` after applying `u1`.
    pub deepest_hole: i64,
    pub fires: u64,
    pub unfires: u64,
    pub cycle_unfires: u64,
    pub cycles_popped: u64,
    /// Grid periods used, in order; the final unrestricted pass is not listed.
    pub levels: Vec<u32>,
    /// Fires plus unfires spent in each level, the final pass last.
    pub level_ops: Vec<u64>,
    pub fallback: bool,
    /// Wall time per phase in nanoseconds: approximation, application,
    /// annihilation, cycle popping. Zero without a clock.
    pub phase_ns: [u64; 4],
}

impl SolveReport {
    pub fn total_ns(&self) -> u64 {
        self.phase_ns.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveError {
    /// The final odometer failed verification.
    Verification(Verdict),
    /// The initial configuration had a negative entry.
    NegativeInput(Site),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Verification(v) => write!(f, "solver output failed verification: {v}"),
            SolveError::NegativeInput(s) => write!(f, "initial configuration is negative at {s}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub outcome: Outcome,
    pub report: SolveReport,
}

/// Working state over a square box with a one-cell border that never holds
/// chips or firings.
#[derive(Clone, Debug)]
pub struct SolveState {
    half: i32,
    side: usize,
    /// Index offsets of the four neighbours, by direction.
    steps: [isize; 4],
    sigma: Vec<i64>,
    odo: Vec<i64>,
    pub fires: u64,
    pub unfires: u64,
}

impl SolveState {
    fn with_half(half: i32) -> Self {
        let side = (2 * half + 1) as usize;
        let w = side as isize;
        SolveState {
            half,
            side,
            steps: [w, 1, -w, -1],
            sigma: vec![0; side * side],
            odo: vec![0; side * side],
            fires: 0,
            unfires: 0,
        }
    }

    #[inline]
    fn idx(&self, s: Site) -> usize {
        (s.y + self.half) as usize * self.side + (s.x + self.half) as usize
    }

    #[inline]
    fn site(&self, i: usize) -> Site {
        Site::new((i % self.side) as i32 - self.half, (i / self.side) as i32 - self.half)
    }

    #[inline]
    fn step(&self, i: usize, d: Direction) -> usize {
        i.wrapping_add_signed(self.steps[d.index()])
    }

    pub fn half(&self) -> i32 {
        self.half
    }

    pub fn sigma(&self, s: Site) -> i64 {
        if s.max_abs() <= self.half {
            self.sigma[self.idx(s)]
        } else {
            0
        }
    }

    pub fn odometer(&self, s: Site) -> i64 {
        if s.max_abs() <= self.half {
            self.odo[self.idx(s)]
        } else {
            0
        }
    }

    /// Ensures `s` lies strictly inside the box, so all its neighbours are
    /// addressable. Returns `true` if the layout changed.
    fn ensure_interior(&mut self, s: Site) -> bool {
        if s.max_abs() < self.half {
            return false;
        }
        let new_half = (s.max_abs() + 1).max(self.half + (self.half / 4).max(32));
        let mut next = SolveState::with_half(new_half);
        for i in 0..self.sigma.len() {
            let j = next.idx(self.site(i));
            next.sigma[j] = self.sigma[i];
            next.odo[j] = self.odo[i];
        }
        next.fires = self.fires;
        next.unfires = self.unfires;
        *self = next;
        true
    }

    #[inline]
    fn is_hill(&self, i: usize) -> bool {
        self.sigma[i] > 1
    }

    #[inline]
    fn is_hole(&self, i: usize) -> bool {
        let s = self.sigma[i];
        (s < 0) | ((s == 0) & (self.odo[i] > 0))
    }

    /// Fires `x`; returns the site receiving the chip and its index.
    #[inline]
    fn fire<S: RotorStacks + ?Sized>(&mut self, stacks: &mut S, x: Site) -> (Site, usize) {
        let mut i = self.idx(x);
        let k = self.odo[i] + 1;
        let d = stacks.rotor(x, k as u64);
        let y = x.neighbor(d);
        if self.ensure_interior(y) {
            i = self.idx(x);
        }
        let t = self.step(i, d);
        self.odo[i] = k;
        self.sigma[i] -= 1;
        self.sigma[t] += 1;
        self.fires += 1;
        (y, t)
    }

    /// Unfires `x`; returns the site that lost a chip and its index.
    #[inline]
    fn unfire<S: RotorStacks + ?Sized>(&mut self, stacks: &mut S, x: Site) -> (Site, usize) {
        let i = self.idx(x);
        let k = self.odo[i];
        debug_assert!(k > 0, "unfire with zero odometer");
        let d = stacks.rotor(x, k as u64);
        let t = self.step(i, d);
        self.sigma[t] -= 1;
        self.sigma[i] += 1;
        self.odo[i] = k - 1;
        self.unfires += 1;
        (x.neighbor(d), t)
    }

    /// Smallest Chebyshev radius containing every site with chips or firings.
    fn extent(&self) -> i32 {
        let mut m = 0;
        for i in 0..self.sigma.len() {
            if self.sigma[i] != 0 || self.odo[i] != 0 {
                m = m.max(self.site(i).max_abs());
            }
        }
        m
    }

    pub fn into_config(self) -> Config {
        let half = self.half;
        let mut sigma: IntField = Field::new(half);
        let mut odo: IntField = Field::new(half);
        sigma.data_mut().copy_from_slice(&self.sigma);
        odo.data_mut().copy_from_slice(&self.odo);
        Config { sigma, odo }
    }
}

/// Phase 1: `σ1 = σ0 + Δ_ρ u1`, with `u = u1`.
pub fn phase1_apply<S: RotorStacks + ?Sized>(u1: &Odometer, sigma0: &ChipConfig, stacks: &mut S) -> SolveState {
    let reach = u1.support_radius().unwrap_or(0).max(sigma0.support_radius().unwrap_or(0));
    let n = sigma0.data().iter().filter(|v| **v > 0).sum::<i64>().max(1) as f64;
    let margin = 32.max(libm::ceil(4.0 * libm::log(n)) as i32);
    let mut st = SolveState::with_half(reach + margin);
    for (s, v) in sigma0.support() {
        let i = st.idx(s);
        st.sigma[i] += v;
    }
    for (s, v) in u1.support() {
        assert!(v > 0, "approximate odometer must be nonnegative");
        let i = st.idx(s);
        let c = stacks.counts(s, v as u64);
        st.odo[i] = v;
        st.sigma[i] -= v;
        for d in Direction::ALL {
            let j = st.step(i, d);
            st.sigma[j] += c[d.index()] as i64;
        }
    }
    st
}

fn next_period(l: u32, factor: f64) -> u32 {
    let next = libm::ceil(factor * f64::from(l) - 1e-9) as u32;
    next.max(l + 1)
}

struct Annihilator<'a, S: ?Sized> {
    st: &'a mut SolveState,
    stacks: &'a mut S,
    /// Sites that may have become hills or holes. Sites rather than
    /// indices, since firing can re-lay the box.
    work: Vec<Site>,
    budget: u64,
}

/// Membership in `G_L = {x ≡ 0 or y ≡ 0 (mod L)}`, tabulated per
/// coordinate over the box it was built for. Period `0` is the empty grid.
struct Grid {
    period: i32,
    offset: i32,
    marks: Vec<bool>,
}

impl Grid {
    fn new(period: u32, half: i32) -> Self {
        let period = period as i32;
        let marks = (-half..=half).map(|c| period != 0 && c.rem_euclid(period) == 0).collect();
        Grid { period, offset: half, marks }
    }

    #[inline]
    fn on_line(&self, c: i32) -> bool {
        match self.marks.get((c + self.offset) as usize) {
            Some(&m) => m,
            None => self.period != 0 && c.rem_euclid(self.period) == 0,
        }
    }

    #[inline]
    fn contains(&self, s: Site) -> bool {
        self.on_line(s.x) | self.on_line(s.y)
    }
}

impl<S: RotorStacks + ?Sized> Annihilator<'_, S> {
    fn ops(&self) -> u64 {
        self.st.fires + self.st.unfires
    }

    /// Fires `x` until it is not a hill and unfires it until it is not a
    /// hole, queueing off-grid neighbours that become hills or holes.
    fn settle(&mut self, x: Site, grid: &Grid) {
        let st = &mut *self.st;
        let mut i = st.idx(x);
        while st.sigma[i] > 1 {
            let k = st.odo[i] + 1;
            let d = self.stacks.rotor(x, k as u64);
            let y = x.neighbor(d);
            if st.ensure_interior(y) {
                i = st.idx(x);
            }
            let t = st.step(i, d);
            st.odo[i] = k;
            st.sigma[i] -= 1;
            st.sigma[t] += 1;
            st.fires += 1;
            // A site already above 2 was queued when it first became a hill.
            if st.sigma[t] == 2 && !grid.contains(y) {
                self.work.push(y);
            }
        }
        // With a nonnegative start a hole has always fired; the guard only
        // matters for hand-built states.
        while st.is_hole(i) && st.odo[i] > 0 {
            let k = st.odo[i];
            let d = self.stacks.rotor(x, k as u64);
            let t = st.step(i, d);
            st.odo[i] = k - 1;
            st.sigma[i] += 1;
            st.sigma[t] -= 1;
            st.unfires += 1;
            if st.is_hole(t) {
                let y = x.neighbor(d);
                if !grid.contains(y) {
                    self.work.push(y);
                }
            }
        }
    }

    /// One substep: settle every hill and hole off the grid of the given
    /// period (`0` means no grid). Returns `false` if the budget ran out.
    fn level(&mut self, period: u32, order: SweepOrder) -> bool {
        'scan: loop {
            let side = self.st.side;
            let grid = Grid::new(period, self.st.half);
            for row in 0..side {
                let y = match order {
                    SweepOrder::Boustrophedon => row,
                    SweepOrder::Reverse => side - 1 - row,
                };
                let leftwards = (row % 2 == 1) == (order == SweepOrder::Boustrophedon);
                for col in 0..side {
                    let x = if leftwards { side - 1 - col } else { col };
                    let i = y * side + x;
                    if !(self.st.is_hill(i) || self.st.is_hole(i)) {
                        continue;
                    }
                    let s = self.st.site(i);
                    if grid.contains(s) {
                        continue;
                    }
                    self.work.push(s);
                    while let Some(w) = self.work.pop() {
                        self.settle(w, &grid);
                    }
                    if self.ops() > self.budget {
                        return false;
                    }
                    if self.st.side != side {
                        // The box grew; rescan in the new layout.
                        continue 'scan;
                    }
                }
            }
            return true;
        }
    }

    /// Hills first, then holes, with no grid. Always terminates.
    fn fallback(&mut self) {
        'hills: loop {
            for i in 0..self.st.sigma.len() {
                if !self.st.is_hill(i) {
                    continue;
                }
                self.work.push(self.st.site(i));
                while let Some(s) = self.work.pop() {
                    while self.st.is_hill(self.st.idx(s)) {
                        let (ts, t) = self.st.fire(self.stacks, s);
                        if self.st.is_hill(t) {
                            self.work.push(ts);
                        }
                    }
                }
                continue 'hills;
            }
            break;
        }
        let mut work: Vec<Site> =
            (0..self.st.sigma.len()).filter(|&i| self.st.is_hole(i)).map(|i| self.st.site(i)).collect();
        while let Some(s) = work.pop() {
            let i = self.st.idx(s);
            while self.st.is_hole(i) && self.st.odo[i] > 0 {
                let (ts, t) = self.st.unfire(self.stacks, s);
                if self.st.is_hole(t) {
                    work.push(ts);
                }
            }
        }
    }
}

/// Phase 2: multiscale annihilation. Afterwards `0 <= σ <= 1` and
/// `σ(x) = 0` implies `u(x) = 0`. Returns the periods used and whether the
/// fallback order was needed.
pub fn phase2_annihilate<S: RotorStacks + ?Sized>(
    st: &mut SolveState,
    stacks: &mut S,
    opts: &SolveOptions,
    chips: u64,
) -> (Vec<u32>, Vec<u64>, bool) {
    let n = chips as f64;
    let budget = opts.op_cap.unwrap_or((64.0 * n * libm::log(n + 2.0)) as u64);
    let budget = st.fires + st.unfires + budget;
    let mut ann = Annihilator { st, stacks, work: Vec::new(), budget };
    let mut periods = Vec::new();
    let mut ops = Vec::new();
    let mut l = 1u32;
    let mut done = false;
    while !done {
        let diameter = 2 * ann.st.extent() + 1;
        let period = if l as i32 > diameter {
            done = true;
            0
        } else {
            periods.push(l);
            l
        };
        let before = ann.ops();
        let ok = ann.level(period, opts.sweep);
        ops.push(ann.ops() - before);
        if !ok {
            let before = ann.ops();
            ann.fallback();
            ops.push(ann.ops() - before);
            return (periods, ops, true);
        }
        l = next_period(l, opts.factor);
    }
    debug_assert!((0..ann.st.sigma.len()).all(|i| !ann.st.is_hill(i) && !ann.st.is_hole(i)));
    (periods, ops, false)
}

/// Phase 3: while the top rotors contain a cycle inside `A = {u > 0}`,
/// unfire each site of the cycle once. Returns `(cycles, unfires)`.
pub fn phase3_pop_cycles<S: RotorStacks + ?Sized>(st: &mut SolveState, stacks: &mut S) -> (u64, u64) {
    const FRESH: u8 = 0;
    const ON_PATH: u8 = 1;
    const RESOLVED: u8 = 2;
    let mut mark = vec![FRESH; st.sigma.len()];
    let mut path: Vec<usize> = Vec::new();
    let (mut cycles, mut unfires) = (0u64, 0u64);
    for start in 0..st.sigma.len() {
        if st.odo[start] == 0 || mark[start] != FRESH {
            continue;
        }
        path.clear();
        let mut cur = start;
        loop {
            if st.odo[cur] == 0 || mark[cur] == RESOLVED {
                break;
            }
            if mark[cur] == ON_PATH {
                let pos = path.iter().rposition(|&p| p == cur).expect("marked site is on the path");
                for &v in &path[pos..] {
                    st.unfire(stacks, st.site(v));
                    mark[v] = FRESH;
                }
                unfires += (path.len() - pos) as u64;
                cycles += 1;
                path.truncate(pos);
                continue;
            }
            mark[cur] = ON_PATH;
            path.push(cur);
            let d = stacks.rotor(st.site(cur), st.odo[cur] as u64);
            cur = st.step(cur, d);
        }
        for &v in &path {
            mark[v] = RESOLVED;
        }
    }
    (cycles, unfires)
}

/// Runs all three phases from `σ0` with approximate odometer `u1`.
///
/// Calls `stacks.prepare(u1)` first. `clock`, if given, returns
/// nanoseconds and is used for the per-phase timings.
pub fn solve<S: RotorStacks + ?Sized>(
    stacks: &mut S,
    sigma0: &ChipConfig,
    u1: &Odometer,
    opts: &SolveOptions,
    clock: Option<&dyn Fn() -> u64>,
) -> Result<Solution, SolveError> {
    if let Some((s, _)) = sigma0.support().find(|(_, v)| *v < 0) {
        return Err(SolveError::NegativeInput(s));
    }
    let now = || clock.map_or(0, |c| c());
    let chips = sigma0.data().iter().sum::<i64>() as u64;
    let mut report = SolveReport { chips, ..SolveReport::default() };

    let t0 = now();
    stacks.prepare(u1);
    let mut st = phase1_apply(u1, sigma0, stacks);
    report.highest_hill = st.sigma.iter().copied().max().unwrap_or(0);
    report.deepest_hole = st.sigma.iter().copied().min().unwrap_or(0);
    let t1 = now();
    report.phase_ns[1] = t1.saturating_sub(t0);

    let (levels, level_ops, fallback) = phase2_annihilate(&mut st, stacks, opts, chips);
    report.levels = levels;
    report.level_ops = level_ops;
    report.fallback = fallback;
    report.fires = st.fires;
    report.unfires = st.unfires;
    let t2 = now();
    report.phase_ns[2] = t2.saturating_sub(t1);

    let (cycles, cycle_unfires) = phase3_pop_cycles(&mut st, stacks);
    report.cycles_popped = cycles;
    report.cycle_unfires = cycle_unfires;
    let t3 = now();
    report.phase_ns[3] = t3.saturating_sub(t2);

    let outcome = Outcome::from_config(st.into_config(), stacks);
    let (abs, max) = odometer_error(u1, &outcome.odometer);
    report.abs_err_u1 = abs;
    report.max_err_u1 = max;

    if opts.verify {
        let v = verify_odometer(&outcome.odometer, sigma0, stacks);
        if !v.is_ok() {
            return Err(SolveError::Verification(v));
        }
    }
    Ok(Solution { outcome, report })
}

/// Solves `n` chips at the origin, building the kernel table it needs.
pub fn solve_point<S: RotorStacks + ?Sized>(
    stacks: &mut S,
    n: u64,
    opts: &SolveOptions,
    clock: Option<&dyn Fn() -> u64>,
) -> Result<Solution, SolveError> {
    let table = KernelTable::new(table_radius_for(n, &opts.approx));
    solve_point_with(stacks, n, &table, opts, clock)
}

/// As [`solve_point`] with a caller-supplied (shared) kernel table, which
/// must cover `table_radius_for(n, &opts.approx)`.
pub fn solve_point_with<S: RotorStacks + ?Sized>(
    stacks: &mut S,
    n: u64,
    table: &KernelTable,
    opts: &SolveOptions,
    clock: Option<&dyn Fn() -> u64>,
) -> Result<Solution, SolveError> {
    let now = || clock.map_or(0, |c| c());
    let t = now();
    let u1 = approx_odometer(n, table, &opts.approx);
    let approx_ns = now().saturating_sub(t);
    let mut sol = solve(stacks, &point_mass(n), &u1, opts, clock)?;
    sol.report.phase_ns[0] = approx_ns;
    Ok(sol)
}

/// `(Σ |a - b|, max |a - b|)`.
pub fn odometer_error(a: &Odometer, b: &Odometer) -> (u64, u64) {
    let h = a.half().max(b.half());
    let (mut sum, mut max) = (0u64, 0u64);
    for y in -h..=h {
        for x in -h..=h {
            let s = Site::new(x, y);
            let d = (a.get(s) - b.get(s)).unsigned_abs();
            sum += d;
            max = max.max(d);
        }
    }
    (sum, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{oracle_simulate, stack_laplacian};
    use crate::prf::Key;
    use crate::stacks::{IdlaStack, LowDiscrepancyStack, PeriodicStack, RotorSequence};

    fn opts() -> SolveOptions {
        SolveOptions { verify: true, ..SolveOptions::default() }
    }

    fn check_against_oracle<S: RotorStacks>(stacks: &mut S, n: u64) {
        let sol = solve_point(stacks, n, &opts(), None).unwrap();
        let oracle = oracle_simulate(stacks, &point_mass(n));
        assert_eq!(sol.outcome, oracle, "n = {n}");
        assert_eq!(sol.outcome.chips.data().iter().sum::<i64>(), n as i64);
    }

    #[test]
    fn periods_follow_the_schedule() {
        let mut l = 1;
        let mut seq = vec![l];
        for _ in 0..9 {
            l = next_period(l, 1.9);
            seq.push(l);
        }
        assert_eq!(seq, vec![1, 2, 4, 8, 16, 31, 59, 113, 215, 409]);
        assert_eq!(next_period(10, 1.9), 19);
    }

    #[test]
    fn one_chip() {
        let mut s = PeriodicStack::new(RotorSequence::WNES);
        let sol = solve_point(&mut s, 1, &opts(), None).unwrap();
        assert_eq!(sol.outcome.odometer.support().count(), 0);
        assert_eq!(sol.outcome.occupied().collect::<Vec<_>>(), vec![Site::ORIGIN]);
    }

    #[test]
    fn periodic_matches_oracle() {
        for seq in [RotorSequence::WNES, RotorSequence::WNSE, RotorSequence::WENS, RotorSequence::CLASSIC] {
            for n in [2, 5, 17, 64, 300, 1024] {
                check_against_oracle(&mut PeriodicStack::new(seq), n);
            }
        }
    }

    #[test]
    fn random_models_match_oracle() {
        for run in 1..4 {
            check_against_oracle(&mut IdlaStack::new(Key([3; 32]), run, 0.0), 700);
            check_against_oracle(&mut IdlaStack::new(Key([3; 32]), run, 1.5), 300);
            check_against_oracle(&mut LowDiscrepancyStack::new(Key([4; 32]), run), 700);
        }
    }

    #[test]
    fn exact_odometer_is_a_fixed_point() {
        let n = 400;
        let mut s = PeriodicStack::new(RotorSequence::WENS);
        let oracle = oracle_simulate(&mut s, &point_mass(n));
        let sol = solve(&mut s, &point_mass(n), &oracle.odometer, &opts(), None).unwrap();
        assert_eq!(sol.report.fires + sol.report.unfires + sol.report.cycle_unfires, 0);
        assert_eq!((sol.report.highest_hill, sol.report.deepest_hole), (1, 0));
        assert_eq!(sol.report.abs_err_u1, 0);
        assert_eq!(sol.outcome, oracle);
    }

    #[test]
    fn zero_approximation_is_plain_growth() {
        let n = 200;
        let mut s = IdlaStack::new(Key([9; 32]), 2, 0.0);
        let zero: IntField = Field::new(0);
        let sol = solve(&mut s, &point_mass(n), &zero, &opts(), None).unwrap();
        assert_eq!(sol.report.unfires + sol.report.cycle_unfires, 0);
        let oracle = oracle_simulate(&mut s, &point_mass(n));
        assert_eq!(sol.outcome, oracle);
    }

    #[test]
    fn sweep_order_does_not_matter() {
        let n = 1 << 12;
        let table = KernelTable::new(table_radius_for(n, &ApproxParams::default()));
        let rev = SolveOptions { sweep: SweepOrder::Reverse, ..opts() };
        let a = solve_point_with(&mut PeriodicStack::new(RotorSequence::WNSE), n, &table, &opts(), None).unwrap();
        let b = solve_point_with(&mut PeriodicStack::new(RotorSequence::WNSE), n, &table, &rev, None).unwrap();
        assert_eq!(a.outcome, b.outcome);
        let mut s1 = IdlaStack::new(Key([1; 32]), 5, 0.0);
        let mut s2 = IdlaStack::new(Key([1; 32]), 5, 0.0);
        let a = solve_point_with(&mut s1, n, &table, &opts(), None).unwrap();
        let b = solve_point_with(&mut s2, n, &table, &rev, None).unwrap();
        assert_eq!(a.outcome, b.outcome);
    }

    #[test]
    fn tiny_budget_uses_fallback() {
        let n = 2000;
        let o = SolveOptions { op_cap: Some(10), ..opts() };
        let mut s = IdlaStack::new(Key([2; 32]), 1, 0.0);
        let sol = solve_point(&mut s, n, &o, None).unwrap();
        assert!(sol.report.fallback);
        let oracle = oracle_simulate(&mut s, &point_mass(n));
        assert_eq!(sol.outcome, oracle);
    }

    #[test]
    fn hill_next_to_hole() {
        // The settled 5-chip plus, with one chip taken from (1,1), which
        // never fired, and put on (1,0).
        let mut s = PeriodicStack::new(RotorSequence::WNES);
        let base = oracle_simulate(&mut s, &point_mass(5));
        let mut sigma0: IntField = Field::new(3);
        sigma0.set(Site::ORIGIN, 5);
        sigma0.set(Site::new(1, 0), 1);
        sigma0.set(Site::new(1, 1), -1);
        let mut st = phase1_apply(&base.odometer, &sigma0, &mut s);
        assert_eq!(st.sigma(Site::new(1, 0)), 2);
        assert_eq!(st.sigma(Site::new(1, 1)), -1);
        let before = st.clone();
        let (_, _, fallback) = phase2_annihilate(&mut st, &mut s, &opts(), 5);
        assert!(!fallback);
        // (1,0) fires once, north, into the hole.
        assert_eq!(st.fires, 1);
        assert_eq!(st.unfires, 0);
        for y in -3..=3 {
            for x in -3..=3 {
                let p = Site::new(x, y);
                let du = st.odometer(p) - before.odometer(p);
                assert_eq!(du, i64::from(p == Site::new(1, 0)), "at {p}");
            }
        }
        assert_eq!(st.sigma(Site::new(1, 0)), 1);
        assert_eq!(st.sigma(Site::new(1, 1)), 0);
    }

    #[test]
    fn two_cycle_is_popped() {
        // (0,0) fires E then (1,0) fires W: tops point at each other.
        let seq: RotorSequence = "NEWS".parse().unwrap();
        let mut s = PeriodicStack::new(seq);
        let mut u: IntField = Field::new(2);
        u.set(Site::ORIGIN, 1);
        u.set(Site::new(1, 0), 2);
        let sigma: IntField = Field::new(2);
        let mut st = phase1_apply(&u, &sigma, &mut s);
        let sig_before = st.sigma.clone();
        let (cycles, unfires) = phase3_pop_cycles(&mut st, &mut s);
        assert_eq!((cycles, unfires), (1, 2));
        assert_eq!(st.sigma, sig_before);
        assert_eq!(st.odometer(Site::ORIGIN), 0);
        assert_eq!(st.odometer(Site::new(1, 0)), 1);
    }

    #[test]
    fn annihilated_odometer_dominates_true_one() {
        for n in [1 << 10, 1 << 12] {
            let mut s = PeriodicStack::new(RotorSequence::CLASSIC);
            let table = KernelTable::new(table_radius_for(n, &ApproxParams::default()));
            let u1 = approx_odometer(n, &table, &ApproxParams::default());
            let mut st = phase1_apply(&u1, &point_mass(n), &mut s);
            phase2_annihilate(&mut st, &mut s, &opts(), n);
            let oracle = oracle_simulate(&mut s, &point_mass(n));
            for (site, v) in oracle.odometer.support() {
                assert!(st.odometer(site) >= v, "u2 < u at {site}");
            }
        }
    }

    #[test]
    fn laplacian_of_result_reproduces_chips() {
        let n = 900;
        let mut s = LowDiscrepancyStack::new(Key([8; 32]), 3);
        let sol = solve_point(&mut s, n, &opts(), None).unwrap();
        let lap = stack_laplacian(&sol.outcome.odometer, &mut s);
        for (site, v) in sol.outcome.chips.support() {
            let expect = lap.get(site) + i64::from(site == Site::ORIGIN) * n as i64;
            assert_eq!(v, expect);
        }
    }

    #[test]
    fn clock_fills_phase_times() {
        use core::cell::Cell;
        let t = Cell::new(0u64);
        let tick = || {
            t.set(t.get() + 10);
            t.get()
        };
        let mut s = PeriodicStack::new(RotorSequence::WNES);
        let sol = solve_point(&mut s, 100, &opts(), Some(&tick)).unwrap();
        assert!(sol.report.phase_ns.iter().all(|v| *v > 0));
    }
}
