//! Prints one PASS/FAIL line per acceptance criterion and exits non-zero
//! if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semistab::cft::{quadratic_class_number, FieldTag};
use semistab::data::DataSet;
use semistab::discbounds::{is_two_decimal_ceiling, known_field_rd, max_degree, division_field_table, DegreeCap};
use semistab::exactnum::{parse_rat, rat, Factorization, Rat};
use semistab::exclusion::{Engine, Rule, RuleSet, Scenario, Verdict, ODD_PAIRS, TWO_PRIMES};
use semistab::groups::{check_g1, check_g2, sylow_admissible_counts, unique_sylow_is_normal};
use semistab::ramification::{
    conductor_bound, conductor_exponent, cyclotomic_cap, cyclotomic_different,
    fontaine_different_bound, herbrand_phi, herbrand_psi, Filtration,
};
use semistab::symplectic::{lagrangian_count_formula, random_ell_subgroup, SympSpace};
use semistab::tate::{fuzz_isogenies, InertiaModule, KernelStrategy};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Check {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

fn table_reproduction() -> Check {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_semistab")).arg("table1").output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || "table1 exited non-zero".into())?;
    let rows = String::from_utf8_lossy(&out.stdout).lines().count();
    ensure(rows == 6, || format!("{rows} rows"))?;
    let data = DataSet::bundled();
    let values = ["6.93", "10.59", "8.25", "15.20", "13.02", "18.01"];
    let caps = [10, 22, 14, 68, 40, 168];
    for ((r, v), cap) in division_field_table(&data.table).map_err(|e| e.to_string())?.iter().zip(values).zip(caps) {
        let value = parse_rat(v).unwrap();
        ensure(is_two_decimal_ceiling(&r.bound, &value), || format!("bound {} vs {v}", r.bound))?;
        ensure(r.degree_cap == DegreeCap::Bounded(cap), || format!("cap {} vs {cap}", r.degree_cap))?;
    }
    within(start, Duration::from_secs(1))
}

fn exclusion_verdicts() -> Check {
    let start = Instant::now();
    let engine = Engine::bundled();
    for (ell, p) in ODD_PAIRS.into_iter().chain(TWO_PRIMES.map(|p| (2, p))) {
        let (v, t) = engine.run(&Scenario::new(ell, p)).map_err(|e| e.to_string())?;
        let target = Engine::target_field(ell, p).unwrap();
        ensure(v == Verdict::Contained(target), || format!("({ell}, {p}): {v}"))?;
        engine.replay(&t).map_err(|e| format!("({ell}, {p}) replay: {e}"))?;
        let needles: &[&str] = match (ell, p) {
            (3, 2) => &["|H| ≤ 7 < 12"],
            (3, 5) => &["|H| ∈ {12, 21, 24, 30}", "[L:E] ∈ {4, 8}", "rd(L) = rd(E) = 3^(7/6)*5^(2/3)", "degree cap 22"],
            (5, 3) => &["|H| = 30 would give H a quotient of order 2"],
            (2, 3) => &["[L:Q] ≤ 10", "n = 3 is impossible"],
            (2, 7) => &["[L:Q] ∈ {12, 20}", "residue_root_check(n, 2) = false"],
            _ => &[],
        };
        for n in needles {
            ensure(t.contains_conclusion(n), || format!("({ell}, {p}) trace lacks {n:?}"))?;
        }
    }
    within(start, Duration::from_secs(5))
}

fn lagrangian_counts() -> Check {
    let start = Instant::now();
    for ((q, n), expected) in [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (5, 1)].into_iter().zip([3, 15, 135, 4, 40, 6]) {
        let space = SympSpace::standard(q, n).map_err(|e| e.to_string())?;
        let found = space.enumerate_lagrangians().map_err(|e| e.to_string())?;
        ensure(found.iter().all(|w| space.is_lagrangian(w)), || format!("({q}, {n}) non-Lagrangian"))?;
        ensure(found.len() == expected, || format!("({q}, {n}): {} vs {expected}", found.len()))?;
        ensure(lagrangian_count_formula(q, n as u32) == expected as u128, || "formula".into())?;
    }
    within(start, Duration::from_secs(30))
}

fn fixed_points() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for q in [2, 3] {
        let space = SympSpace::standard(q, 2).map_err(|e| e.to_string())?;
        for i in 0..200 {
            let gens = random_ell_subgroup(&space, &mut rng);
            let w = space.stable_lagrangian(&gens).map_err(|e| format!("q = {q}, #{i}: {e}"))?;
            let stable = space.is_lagrangian(&w) && gens.iter().all(|g| w.image(space.field(), g) == w);
            ensure(stable, || format!("q = {q}, #{i}: not stable"))?;
        }
    }
    within(start, Duration::from_secs(60))
}

fn isogeny_fuzz() -> Check {
    let start = Instant::now();
    let r = fuzz_isogenies(2024, 1000).map_err(|e| e.to_string())?;
    ensure(r.passed(), || format!("{r:?}"))?;
    ensure(r.monotone_checked > 0 && r.increment_checked > 0, || "filtered subsets empty".into())?;
    within(start, Duration::from_secs(60))
}

fn tower_growth() -> Check {
    let start = Instant::now();
    for (ell, t, a) in [(3u64, 1usize, 1usize), (2, 2, 1), (5, 1, 0)] {
        let n: Vec<Vec<i64>> = (0..t).map(|i| (0..t).map(|j| i64::from(i == j)).collect()).collect();
        let m = InertiaModule::standard(ell, t, a, &n).map_err(|e| e.to_string())?;
        let run = m.tower(10, &KernelStrategy::FlagM1).map_err(|e| e.to_string())?;
        let (i0, c0) = run.steps[0];
        ensure(run.steps.len() == 11, || "step count".into())?;
        for (k, &(stage, comp)) in run.steps.iter().enumerate() {
            ensure(stage == i0 + k as u64 && comp == c0 + (k * t) as u64, || {
                format!("({ell}, {t}, {a}) step {k}: stage {stage}, component {comp}")
            })?;
        }
    }
    within(start, Duration::from_secs(5))
}

fn random_filtration(rng: &mut ChaCha8Rng) -> Filtration {
    let p = [2u64, 3, 5][rng.gen_range(0..3)];
    let tame = loop {
        let t = rng.gen_range(1..=6);
        if t % p != 0 {
            break t;
        }
    };
    let mut orders = vec![];
    let mut wild = p.pow(rng.gen_range(0..=3));
    orders.push(tame * wild);
    for _ in 0..rng.gen_range(1..=5) {
        orders.push(wild);
        if wild > 1 && rng.gen_bool(0.4) {
            wild /= p;
        }
    }
    orders.push(1);
    Filtration::new(p, orders).expect("valid profile")
}

fn herbrand_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut points = 0;
    for _ in 0..100 {
        let f = random_filtration(&mut rng);
        for _ in 0..5 {
            let x: Rat = rat(rng.gen_range(0..400), rng.gen_range(1..40));
            let there = herbrand_psi(&f, &herbrand_phi(&f, &x).unwrap()).unwrap();
            let back = herbrand_phi(&f, &herbrand_psi(&f, &x).unwrap()).unwrap();
            ensure(there == x && back == x, || format!("{:?} at {x}", f.orders()))?;
            points += 1;
        }
        if f.g(2) == 1 {
            let c = conductor_bound(&f);
            ensure(c <= rat(2, 1), || format!("{:?}: conductor {c}", f.orders()))?;
            if let Ok(e) = conductor_exponent(&f) {
                ensure(e <= 2, || format!("{:?}: exponent {e}", f.orders()))?;
            }
        }
    }
    ensure(points == 500, || format!("{points} points"))
}

fn cyclotomic_caps() -> Check {
    for p in [2u64, 3, 5, 7] {
        for n in 1..=3 {
            let cap = cyclotomic_cap(p, n).map_err(|e| e.to_string())?;
            let expected = if p == 2 { n + 1 } else { n };
            ensure(cap == expected, || format!("cap({p}, {n}) = {cap}"))?;
            let bound = fontaine_different_bound(n, p).unwrap();
            let next = cyclotomic_different(p, cap + 1).unwrap();
            ensure(next >= bound, || format!("cap({p}, {n}) not maximal"))?;
        }
    }
    Ok(())
}

fn unramified_branch() -> Check {
    let data = DataSet::bundled();
    let disc = Factorization::parse("3^7*5^4").unwrap();
    let rd = known_field_rd(&disc, 6).map_err(|e| e.to_string())?;
    ensure(rd.cmp_rat(&parse_rat("10.54").unwrap()).is_lt(), || format!("{rd} ≥ 10.54"))?;
    let cap = max_degree(&data.table, &rd).map_err(|e| e.to_string())?;
    ensure(cap == 22, || format!("cap {cap}"))
}

fn class_numbers_and_groups() -> Check {
    let data = DataSet::bundled();
    for (d, tag) in [(-3, "Q(mu_3)"), (-7, "Q(sqrt(-7))"), (12, "Q(sqrt(3))"), (28, "Q(sqrt(7))")] {
        let h = quadratic_class_number(d).map_err(|e| e.to_string())?;
        let field: FieldTag = tag.parse().unwrap();
        let entry = data.ledger.lookup(&field, "class_number").map_err(|e| e.to_string())?;
        ensure(h == 1 && entry.value.as_int() == Some(1.into()), || format!("disc {d}: h = {h}, ledger {}", entry.value))?;
    }
    let (mut g1, mut g2, mut g3) = (0, 0, 0);
    for (name, g) in data.catalog.iter() {
        ensure(check_g1(g), || format!("{name} fails the index-2 check"))?;
        g1 += usize::from(g.order() % 4 == 2);
        for ell in [2u64, 3, 5, 7] {
            if g.order() % ell != 0 {
                continue;
            }
            if g.is_ell_group(ell) {
                ensure(check_g2(g, ell).unwrap_or(false), || format!("{name} fails the prime-square check"))?;
                g2 += usize::from(g.order() >= ell * ell);
            }
            let n = g.sylow_count(ell).map_err(|e| e.to_string())?;
            let admissible = sylow_admissible_counts(g.order(), ell).map_err(|e| e.to_string())?;
            ensure(admissible.contains(&n), || format!("{name}: {n} Sylow {ell}-subgroups"))?;
            if !g.is_ell_group(ell) {
                if let Some(normal) = unique_sylow_is_normal(g, ell).map_err(|e| e.to_string())? {
                    ensure(normal, || format!("{name}: unique Sylow {ell}-subgroup not normal"))?;
                    g3 += 1;
                }
            }
        }
    }
    ensure(g1 > 0 && g2 > 0 && g3 > 0, || format!("instances g1={g1} g2={g2} g3={g3}"))
}

fn mutation_sensitivity() -> Check {
    let data = DataSet::bundled();
    for rule in Rule::CASE_RULES {
        let engine = Engine::new(data.clone(), RuleSet::without(rule));
        let mut stuck = false;
        for (ell, p) in ODD_PAIRS.into_iter().chain(TWO_PRIMES.map(|p| (2, p))) {
            let (v, _) = engine.run(&Scenario::new(ell, p)).map_err(|e| e.to_string())?;
            stuck |= matches!(v, Verdict::Stuck(_));
        }
        ensure(stuck, || format!("disabling {rule} changes no verdict"))?;
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("table of root-discriminant bounds and degree caps", table_reproduction),
        ("exclusion verdicts and anchored trace steps", exclusion_verdicts),
        ("Lagrangian counts by enumeration", lagrangian_counts),
        ("stable Lagrangians for random l-subgroups", fixed_points),
        ("component identity and lattice diagram fuzz", isogeny_fuzz),
        ("isogeny tower growth", tower_growth),
        ("Herbrand round trip and conductor bound", herbrand_round_trip),
        ("cyclotomic caps", cyclotomic_caps),
        ("unramified-branch discriminant check", unramified_branch),
        ("quadratic class numbers and group catalog", class_numbers_and_groups),
        ("mutation sensitivity of the exclusion rules", mutation_sensitivity),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(()) => println!("PASS {}: {name}", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {}: {name}: {e}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
