//! Command bodies. Each returns the process exit code on success.

use std::path::Path;

use mmlab_core::cubes::{build_hierarchy, dyadic_maximal, dyadic_weak_check, verify_hierarchy, CubeHierarchy};
use mmlab_core::kernels::{domination_check, riesz_form, KernelMatrix, KernelSpec};
use mmlab_core::maximal::{centered_maximal, fractional_maximal, morrey_norm, read_function, uncentered_maximal, Potential};
use mmlab_core::space::{
    annuli_constant, binary_tree, connected_sum, doubling_profile, grid, path, product_space, separated_cover, Sigma2,
};
use mmlab_core::spectral::{
    bessel_kernel, bessel_separation_check, calibrate_cp, faber_krahn_fit, fefferman_phong_constant,
    gaussian_bound_fit, hardy_check, heat_kernel, positivity_checks, product_identity_check, riesz_bound_fit,
    riesz_kernel, schrodinger_lambda1, spectrum_bounds, DirichletOperator,
};
use mmlab_core::suite::{run_acceptance, Scale};
use mmlab_core::{Check, Error, MetricMeasureSpace, PointId, Report, Result};
use serde_json::json;

use crate::output::{report_of, Outcome, Series, Sink};
use crate::{
    AnalyzeArgs, AnalyzeKind, Command, CubesCmd, GenCmd, MaximalArgs, MaximalKindArg, MorreyArgs, SpectralCmd,
    SuiteCmd, VerifyCmd,
};

pub fn run(command: Command, seed: u64, sink: &mut Sink) -> Result<u8> {
    match command {
        Command::Gen(g) => gen(g, sink),
        Command::Analyze(a) => analyze(a, sink),
        Command::Cubes(c) => cubes(c, sink),
        Command::Maximal(m) => maximal(m, sink),
        Command::Morrey(m) => morrey(m, sink),
        Command::Spectral(s) => spectral(s, seed, sink),
        Command::Verify(v) => verify(v, seed, sink),
        Command::Suite(s) => suite(s, seed, sink),
    }
}

fn finish(sink: &mut Sink, outcome: Outcome) -> Result<u8> {
    let pass = outcome.report.all_pass();
    sink.emit(outcome)?;
    Ok(if pass { 0 } else { 1 })
}

fn read_input(sink: &mut Sink, name: &str, path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {name} file {}: {e}", path.display())))?;
    sink.manifest.add_input(name, &bytes);
    Ok(bytes)
}

fn load_space(sink: &mut Sink, path: &Path) -> Result<MetricMeasureSpace> {
    let bytes = read_input(sink, "space", path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::InvalidInput("space file is not UTF-8".into()))?;
    MetricMeasureSpace::from_json(&text)
}

fn load_function(sink: &mut Sink, name: &str, path: &Path, n: usize) -> Result<Vec<f64>> {
    read_input(sink, name, path)?;
    read_function(path, n)
}

fn load_potential(sink: &mut Sink, path: &Path, n: usize) -> Result<Potential> {
    Potential::new(load_function(sink, "potential", path, n)?)
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => println!("{}", text.trim_end()),
    }
    Ok(())
}

/// `{:?}` formatting (always shows a decimal point), with `-0.0` printed as `0.0`.
fn num(x: f64) -> String {
    format!("{:?}", x + 0.0)
}

fn gen(cmd: GenCmd, sink: &mut Sink) -> Result<u8> {
    let space = match cmd {
        GenCmd::Grid { dim, side, h, sigma2 } => grid(dim, side, h, Sigma2::Constant(sigma2))?,
        GenCmd::Path { n, h } => path(n, h)?,
        GenCmd::Tree { depth } => binary_tree(depth)?,
        GenCmd::ConnectedSum { copies, neck } => {
            let parsed = copies
                .iter()
                .map(|c| {
                    let (d, s) = c
                        .split_once(':')
                        .ok_or_else(|| Error::InvalidInput(format!("copy {c:?} is not dim:side")))?;
                    let d = d.trim().parse().map_err(|_| Error::InvalidInput(format!("bad dimension in {c:?}")))?;
                    let s = s.trim().parse().map_err(|_| Error::InvalidInput(format!("bad side in {c:?}")))?;
                    Ok((d, s))
                })
                .collect::<Result<Vec<(usize, usize)>>>()?;
            connected_sum(&parsed, neck)?
        }
        GenCmd::Product { space, n_line, h } => {
            let base = load_space(sink, &space)?;
            product_space(&base, n_line, h)?
        }
    };
    let mut text = space.to_json();
    text.push('\n');
    write_text(sink.out.as_deref(), &text)?;
    Ok(0)
}

fn analyze(args: AnalyzeArgs, sink: &mut Sink) -> Result<u8> {
    let space = load_space(sink, &args.space)?;
    let mut report = Report::new();
    let mut headline = Vec::new();
    let mut series: Vec<Series> = Vec::new();
    match args.kind {
        AnalyzeKind::Doubling => {
            let mut a = Vec::new();
            let mut profiles = Vec::new();
            for &r in &args.radius {
                let prof = doubling_profile(&space, r)?;
                headline.push(format!(
                    "R={} doubling={} eta={} reverse={} nu={}",
                    num(r),
                    num(prof.doubling),
                    num(prof.eta),
                    num(prof.reverse),
                    num(prof.nu)
                ));
                a.push((r, prof.doubling));
                profiles.push(prof);
            }
            report.set("profiles", &profiles);
            series.push(("doubling constant".into(), a));
        }
        AnalyzeKind::Annuli => {
            let mut a = Vec::new();
            let mut reports = Vec::new();
            for &r in &args.radius {
                let rep = annuli_constant(&space, r)?;
                headline.push(format!("R={} annuli={}", num(r), num(rep.constant)));
                a.push((r, rep.constant));
                reports.push(rep);
            }
            report.set("annuli", &reports);
            series.push(("annulus constant".into(), a));
        }
        AnalyzeKind::Cover => {
            let delta = args.delta.ok_or_else(|| Error::InvalidInput("cover needs --delta".into()))?;
            if args.radius.len() != 1 {
                return Err(Error::InvalidInput("cover takes a single --radius".into()));
            }
            let ball = space.ball(args.center, args.radius[0])?;
            let cover = separated_cover(&space, &ball, delta)?;
            headline.push(format!("centers={} bound={}", cover.centers.len(), num(cover.bound)));
            report.set("center", args.center).set("radius", args.radius[0]).set("delta", delta);
            report.set("centers", &cover.centers).set("bound", cover.bound);
            report.extend_checks(cover.checks);
        }
    }
    finish(sink, Outcome { report, headline, series, x_label: "R".into() })
}

fn cubes(cmd: CubesCmd, sink: &mut Sink) -> Result<u8> {
    match cmd {
        CubesCmd::Build { space, rho, level_min } => {
            let space = load_space(sink, &space)?;
            let h = build_hierarchy(&space, level_min, rho)?;
            let mut text = serde_json::to_string(&h)?;
            text.push('\n');
            write_text(sink.out.as_deref(), &text)?;
            Ok(0)
        }
        CubesCmd::Verify { space, hierarchy } => {
            let space = load_space(sink, &space)?;
            let bytes = read_input(sink, "hierarchy", &hierarchy)?;
            let h: CubeHierarchy = serde_json::from_slice(&bytes)?;
            let checks = verify_hierarchy(&space, &h)?;
            let headline = checks
                .iter()
                .map(|c| {
                    if c.pass {
                        format!("{}: ok", c.name)
                    } else {
                        format!("{}: FAILED {}", c.name, c.worst_case)
                    }
                })
                .collect();
            let mut report = Report::new();
            report.set("rho", h.rho).set("m", h.m).set("top_level", h.top_level());
            report.extend_checks(checks);
            finish(sink, Outcome { report, headline, series: Vec::new(), x_label: String::new() })
        }
    }
}

fn maximal(args: MaximalArgs, sink: &mut Sink) -> Result<u8> {
    let space = load_space(sink, &args.space)?;
    let f = load_function(sink, "function", &args.function, space.len())?;
    let mut report = Report::new();
    let values = match args.kind {
        MaximalKindArg::Centered => centered_maximal(&space, &f, args.delta)?.values,
        MaximalKindArg::Uncentered => uncentered_maximal(&space, &f, args.delta)?.values,
        MaximalKindArg::Fractional => fractional_maximal(&space, &f, args.s, args.delta)?.values,
        MaximalKindArg::Dyadic => {
            let h = match &args.hierarchy {
                Some(p) => serde_json::from_slice(&read_input(sink, "hierarchy", p)?)?,
                None => build_hierarchy(&space, None, args.rho)?,
            };
            let m = dyadic_maximal(&space, &h, &f, args.delta)?;
            report.check(dyadic_weak_check(&space, &m, &f));
            m
        }
    };
    let kind = format!("{:?}", args.kind).to_lowercase();
    let max = values.iter().copied().fold(0.0, f64::max);
    report.set("kind", &kind).set("s", args.s).set("delta", args.delta).set("max", max).set("values", &values);
    let headline = format!("{kind} maximal: {} points, max {}", values.len(), num(max));
    finish(sink, Outcome::new(report, headline))
}

fn morrey(args: MorreyArgs, sink: &mut Sink) -> Result<u8> {
    let space = load_space(sink, &args.space)?;
    let v = load_potential(sink, &args.potential, space.len())?;
    let mut norms = Vec::new();
    let mut headline = Vec::new();
    let mut pts = Vec::new();
    for &r in &args.radius {
        let n = morrey_norm(&space, &v, args.p, r)?;
        headline.push(format!("N_{{p={},R={}}} = {}", num(args.p), num(r), num(n.value)));
        pts.push((r, n.value));
        norms.push(n);
    }
    let mut report = Report::new();
    report.set("norms", &norms);
    let series = vec![("Morrey norm".to_string(), pts.into_iter().filter(|p| p.0.is_finite()).collect())];
    finish(sink, Outcome { report, headline, series, x_label: "R".into() })
}

/// Parses `all`, `interior`, `ball:<x>:<r>` or a comma-separated id list.
fn parse_domain(space: &MetricMeasureSpace, spec: &str) -> Result<Vec<PointId>> {
    let spec = spec.trim();
    match spec {
        "all" => Ok((0..space.len()).collect()),
        "interior" => Ok(space.interior()),
        _ if spec.starts_with("ball:") => {
            let parts: Vec<&str> = spec.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::InvalidInput(format!("domain {spec:?} is not ball:<x>:<r>")));
            }
            let x: PointId = parts[1].parse().map_err(|_| Error::InvalidInput(format!("bad center in {spec:?}")))?;
            let r: f64 = parts[2].parse().map_err(|_| Error::InvalidInput(format!("bad radius in {spec:?}")))?;
            Ok(space.ball(x, r)?.members)
        }
        _ => {
            let mut ids = spec
                .split(',')
                .map(|t| t.trim().parse::<PointId>().map_err(|_| Error::InvalidInput(format!("bad point id {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            for &x in &ids {
                space.check_point(x)?;
            }
            ids.sort_unstable();
            ids.dedup();
            Ok(ids)
        }
    }
}

/// Rounds eigenvalues that are zero up to rounding to exactly zero.
fn snap(value: f64, op: &DirichletOperator) -> f64 {
    let scale = (0..op.len()).map(|a| op.stiffness().get(a, a) / op.mass()[a]).fold(1.0, f64::max);
    if value.abs() <= 1e-12 * scale {
        0.0
    } else {
        value
    }
}

fn write_matrix(path: &Path, k: &KernelMatrix) -> Result<()> {
    let rows: Vec<Vec<f64>> = (0..k.len()).map(|x| k.row(x)).collect();
    std::fs::write(path, serde_json::to_string(&rows)?)?;
    Ok(())
}

fn spectral(cmd: SpectralCmd, seed: u64, sink: &mut Sink) -> Result<u8> {
    match cmd {
        SpectralCmd::Lambda1 { space, domain, potential } => {
            let space = load_space(sink, &space)?;
            let dom = parse_domain(&space, &domain)?;
            let op = DirichletOperator::on_domain(&space, &dom)?;
            let v = match &potential {
                Some(p) => load_potential(sink, p, space.len())?,
                None => Potential::new(vec![0.0; space.len()])?,
            };
            let value = snap(schrodinger_lambda1(&op, &v)?, &op);
            let mut report = Report::new();
            report.set("domain_size", dom.len()).set("lambda1", value);
            finish(sink, Outcome::new(report, num(value)))
        }
        SpectralCmd::FkFit { space, radius, eta, samples, boundary } => {
            let space = load_space(sink, &space)?;
            let op = DirichletOperator::new(&space, boundary.into())?;
            let mut fits = Vec::new();
            let mut headline = Vec::new();
            let mut pts = Vec::new();
            for &r in &radius {
                let fit = faber_krahn_fit(&space, &op, r, eta, samples, seed)?;
                headline.push(format!("R={} eta={} b={}", num(r), num(fit.eta), num(fit.b)));
                pts.push((r, fit.b));
                fits.push(fit);
            }
            let mut report = Report::new();
            report.set("fits", &fits);
            finish(sink, Outcome { report, headline, series: vec![("b".into(), pts)], x_label: "R".into() })
        }
        SpectralCmd::Heat { space, times, boundary, gaussian_radius, c, lambda_gamma, matrix_out } => {
            let space = load_space(sink, &space)?;
            let op = DirichletOperator::new(&space, boundary.into())?;
            let hk = heat_kernel(&op, &times)?;
            let mut report = Report::new();
            let mut headline = Vec::new();
            let mut min_entry = f64::INFINITY;
            let mut max_mass = 0.0f64;
            let mut max_asym = 0.0f64;
            for ti in 0..times.len() {
                let m = hk.matrix(ti);
                for a in 0..hk.len() {
                    let mut mass = 0.0;
                    for b in 0..hk.len() {
                        min_entry = min_entry.min(m[(a, b)]);
                        max_asym = max_asym.max((m[(a, b)] - m[(b, a)]).abs());
                        mass += m[(a, b)] * op.mass()[b];
                    }
                    max_mass = max_mass.max(mass);
                }
                if let Some(prefix) = &matrix_out {
                    let mut p = prefix.as_os_str().to_owned();
                    p.push(format!(".{ti}.bin"));
                    hk.write_binary(ti, Path::new(&p))?;
                }
            }
            let mut semigroup = 0.0f64;
            for i in 0..times.len() {
                for j in i..times.len() {
                    for k in 0..times.len() {
                        if ((times[i] + times[j]) - times[k]).abs() <= 1e-12 * times[k] {
                            semigroup = semigroup.max(hk.semigroup_error(i, j, k)?);
                        }
                    }
                }
            }
            report.set("times", &times).set("min_entry", min_entry).set("max_mass", max_mass);
            report.set("max_asymmetry", max_asym).set("semigroup_error", semigroup);
            report.check(Check::new("nonnegative", min_entry >= -1e-12, json!({ "min_entry": min_entry })));
            report.check(Check::new("sub_markov", max_mass <= 1.0 + 1e-9, json!({ "max_mass": max_mass })));
            report.check(Check::new("symmetric", max_asym <= 1e-9, json!({ "max_asymmetry": max_asym })));
            report.check(Check::new("semigroup", semigroup <= 1e-8, json!({ "max_error": semigroup })));
            headline.push(format!("max mass {} semigroup error {}", num(max_mass), num(semigroup)));
            if let Some(r) = gaussian_radius {
                let lg = lambda_gamma.map(|v| (v[0], v[1]));
                let fit = gaussian_bound_fit(&space, &hk, r, c, lg)?;
                headline.push(format!(
                    "ln C_small={} ln C_large={}",
                    num(fit.ln_c_small),
                    num(fit.ln_c_large)
                ));
                report.set("gaussian", &fit);
            }
            finish(sink, Outcome { report, headline, series: Vec::new(), x_label: String::new() })
        }
        SpectralCmd::Riesz { space, s, boundary, matrix_out } => {
            let space = load_space(sink, &space)?;
            let op = DirichletOperator::new(&space, boundary.into())?;
            let k = riesz_kernel(&op, s)?;
            let fit = riesz_bound_fit(&space, &op, &k, s)?;
            if let Some(p) = &matrix_out {
                write_matrix(p, &k)?;
            }
            let headline = format!("s={} C={}", num(s), num(fit.c));
            finish(sink, Outcome::new(report_of(&fit)?, headline))
        }
        SpectralCmd::Bessel { space, s, lambda, gammas, threshold, boundary, matrix_out } => {
            let space = load_space(sink, &space)?;
            let op = DirichletOperator::new(&space, boundary.into())?;
            let g = bessel_kernel(&op, s, lambda)?;
            let sep = bessel_separation_check(&space, &op, &g, s, lambda, &gammas, threshold)?;
            if let Some(p) = &matrix_out {
                write_matrix(p, &g)?;
            }
            let headline = gammas
                .iter()
                .zip(&sep.constants)
                .map(|(gm, c)| format!("gamma={} C={}", num(*gm), num(*c)))
                .collect();
            let pts = gammas.iter().copied().zip(sep.constants.iter().copied()).collect();
            let report = report_of(&sep)?;
            finish(sink, Outcome { report, headline, series: vec![("constant".into(), pts)], x_label: "gamma".into() })
        }
    }
}

fn parse_witness(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad witness {s:?} (expected r,R,nu)"))))
        .collect::<Result<_>>()?;
    match parts[..] {
        [r, big_r, nu] => Ok((r, big_r, nu)),
        _ => Err(Error::InvalidInput(format!("bad witness {s:?} (expected r,R,nu)"))),
    }
}

fn verify(cmd: VerifyCmd, seed: u64, sink: &mut Sink) -> Result<u8> {
    match cmd {
        VerifyCmd::FeffermanPhong { space, potential, p, radius, boundary } => {
            let space = load_space(sink, &space)?;
            let v = load_potential(sink, &potential, space.len())?;
            let op = DirichletOperator::new(&space, boundary.into())?;
            let mut report = Report::new();
            let mut results = Vec::new();
            let mut headline = Vec::new();
            let mut pts = Vec::new();
            for &r in &radius {
                let mut fp = fefferman_phong_constant(&space, &op, &v, p, r)?;
                headline.push(format!("R={} C={} theta={}", num(r), num(fp.c_emp), num(fp.theta)));
                if r.is_finite() {
                    pts.push((r, fp.c_emp));
                }
                for c in fp.checks.drain(..) {
                    report.check(Check::new(format!("{}@R={}", c.name, num(r)), c.pass, c.worst_case));
                }
                results.push(fp);
            }
            let c_max = results.iter().map(|f| f.c_emp).fold(0.0, f64::max);
            report.set("p", p).set("c_max", c_max).set("scales", &results);
            finish(sink, Outcome { report, headline, series: vec![("C".into(), pts)], x_label: "R".into() })
        }
        VerifyCmd::WeakPositivity { space, potential, p, radius, cp, lambda1_m, lambdas, boundary } => {
            let space = load_space(sink, &space)?;
            let v = load_potential(sink, &potential, space.len())?;
            let op = DirichletOperator::new(&space, boundary.into())?;
            let rep = positivity_checks(&space, &op, &v, p, radius, cp, lambda1_m, &lambdas)?;
            let mut headline = vec![format!(
                "theta+={} theta-={} factor={}",
                num(rep.theta_plus),
                num(rep.theta_minus),
                num(rep.factor)
            )];
            for e in &rep.sweep {
                headline.push(format!("lambda={} theta={} ratio={}", num(e.lambda), num(e.theta), num(e.ratio)));
            }
            let series = vec![
                ("theta".to_string(), rep.sweep.iter().map(|e| (e.lambda, e.theta)).collect()),
                ("ratio".to_string(), rep.sweep.iter().map(|e| (e.lambda, e.ratio)).collect()),
            ];
            finish(sink, Outcome { report: report_of(&rep)?, headline, series, x_label: "lambda".into() })
        }
        VerifyCmd::Hardy { space, origin, p, radius, witness, boundary } => {
            let space = load_space(sink, &space)?;
            let op = DirichletOperator::new(&space, boundary.into())?;
            let ws = witness.iter().map(|w| parse_witness(w)).collect::<Result<Vec<_>>>()?;
            let rep = hardy_check(&space, &op, origin, p, radius, &ws)?;
            let mut headline = vec![format!("C_H={} 1/C_H={}", num(rep.c_h), num(rep.inv_c_h))];
            if let Some(k) = &rep.k_p {
                headline.push(format!("K_p={}", num(k.value)));
            }
            for w in &rep.witnesses {
                headline.push(format!("r={} R={} effective nu={}", num(w.r), num(w.big_r), num(w.effective_nu)));
            }
            finish(sink, Outcome { report: report_of(&rep)?, headline, series: Vec::new(), x_label: String::new() })
        }
        VerifyCmd::SpectrumBounds { space, potential, p, c1, cp, calibrate, tent_stride, boundary } => {
            let space = load_space(sink, &space)?;
            let v = load_potential(sink, &potential, space.len())?;
            let op = DirichletOperator::new(&space, boundary.into())?;
            let (cp, calibration) = match cp {
                Some(c) => (c, None),
                None => {
                    let cal = calibrate_cp(&space, &op, p, calibrate, seed)?;
                    (cal.cp, Some(cal))
                }
            };
            let res = spectrum_bounds(&space, &op, &v, p, c1, cp, tent_stride)?;
            let headline = format!("{} <= {} <= {}", num(res.lower), num(-res.exact), num(res.upper));
            let mut report = report_of(&res)?;
            report.set("calibration", &calibration);
            finish(sink, Outcome::new(report, headline))
        }
        VerifyCmd::ProductIdentity { space, potential, n_line, h, p, radius, times } => {
            let space = load_space(sink, &space)?;
            let v = load_potential(sink, &potential, space.len())?;
            let rep = product_identity_check(&space, &v, n_line, h, p, radius, &times)?;
            let headline = format!(
                "lambda1 gap {} max heat error {}",
                num(rep.lambda1_gap),
                num(rep.heat_errors.iter().map(|e| e.1).fold(0.0, f64::max))
            );
            finish(sink, Outcome::new(report_of(&rep)?, headline))
        }
        VerifyCmd::Domination { space, kernel, riesz_s, delta, p, trials, rho, growth } => {
            let space = load_space(sink, &space)?;
            let k = match &kernel {
                Some(path) => {
                    let spec: KernelSpec = serde_json::from_slice(&read_input(sink, "kernel", path)?)?;
                    KernelMatrix::from_spec(&space, &spec, path.parent())?
                }
                None => riesz_form(&space, riesz_s),
            };
            let rep = domination_check(&space, &k, delta, p, trials, seed, rho, growth)?;
            let headline = format!("C={} violations={}", num(rep.c_emp), rep.violations.len());
            finish(sink, Outcome::new(report_of(&rep)?, headline))
        }
    }
}

fn suite(cmd: SuiteCmd, seed: u64, sink: &mut Sink) -> Result<u8> {
    match cmd {
        SuiteCmd::Acceptance { scale } => {
            let scale: Scale = scale.parse()?;
            let results = run_acceptance(scale, seed)?;
            // Determinism: the small battery run twice serializes identically.
            let first = serde_json::to_string(&run_acceptance(Scale::Small, seed)?)?;
            let second = serde_json::to_string(&run_acceptance(Scale::Small, seed)?)?;
            let deterministic = first == second;
            let mut headline: Vec<String> = results
                .iter()
                .map(|r| format!("[{}] {} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.id, r.name, r.summary))
                .collect();
            headline.push(format!(
                "[{}] 10 determinism: repeated small battery {}",
                if deterministic { "PASS" } else { "FAIL" },
                if deterministic { "byte-identical" } else { "differs" }
            ));
            let mut report = Report::new();
            report.set("scale", scale).set("criteria", &results);
            for r in &results {
                report.check(Check::new(format!("criterion_{}", r.id), r.pass, json!(r.summary)));
            }
            report.check(Check::new("criterion_10", deterministic, json!({ "bytes": first.len() })));
            finish(sink, Outcome { report, headline, series: Vec::new(), x_label: String::new() })
        }
    }
}

