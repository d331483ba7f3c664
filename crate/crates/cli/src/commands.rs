use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde_json::json;
use sta_core::delannoy::inequality_report;
use sta_core::sta::{pairwise_matrix, CostProvider, DivergenceCost};
use sta_core::synth::{block_region, centered_pulse, generate_blobs, pulse, BlobSpec};
use sta_core::timeshift::{profile, shift_gap_experiment};
use sta_core::uot::{
    primal_objective, sinkhorn_divergence, sinkhorn_unbalanced, transport_plan, GibbsKernel, GroundGeometry, UotParams,
};

use crate::error::{CliError, CliResult};
use crate::io::{csv_bytes, emit, json_bytes, num, parent_dir, read_edges, read_vector, GeometrySpec, Manifest, ManifestItem};
use crate::{BlobArgs, DelannoyArgs, FrameCost, MatrixArgs, ShiftArgs, SinkhornArgs, SolverArgs};

fn params(solver: &SolverArgs, p: usize) -> CliResult<UotParams<f64>> {
    let eps = solver.epsilon.unwrap_or(10.0 / p as f64);
    if solver.max_iter == 0 {
        return Err(CliError::Usage("--max-iter must be positive".into()));
    }
    let params = UotParams::new(eps, solver.gamma)?
        .with_tol(solver.tol)
        .with_max_iter(solver.max_iter);
    params.validate()?;
    Ok(params)
}

pub fn matrix(args: MatrixArgs) -> CliResult<()> {
    let started = Instant::now();
    let manifest = Manifest::read(&args.manifest)?;
    if manifest.items.is_empty() {
        return Err(CliError::Usage(format!("manifest {} lists no items", args.manifest.display())));
    }
    if args.threads == 0 {
        return Err(CliError::Usage("--threads must be positive".into()));
    }
    let base = parent_dir(&args.manifest);
    let data = manifest.load_items(&base)?;
    let p = data[0].p();
    let provider = match args.cost {
        FrameCost::Euclidean => CostProvider::SquaredEuclidean,
        FrameCost::Sinkhorn => {
            let spec = manifest
                .geometry
                .as_ref()
                .ok_or_else(|| CliError::Usage("the sinkhorn cost needs a geometry in the manifest".into()))?;
            let geom = spec.build(&base, manifest.median_normalize)?;
            let params = params(&args.solver, p)?;
            let kernel = GibbsKernel::new(geom, params.epsilon)?;
            CostProvider::Divergence(DivergenceCost::new(Arc::new(kernel), params).with_signed(manifest.signed_mode.into()))
        }
    };
    let m = pairwise_matrix(&data, args.beta, &provider, args.threads)?;

    let labels: Vec<String> = manifest.items.iter().map(|i| i.label.clone()).collect();
    let header = std::iter::once("label".to_string()).chain(labels.iter().cloned()).collect();
    let rows = (0..m.n()).map(|i| {
        std::iter::once(labels[i].clone())
            .chain((0..m.n()).map(|j| num(m.get(i, j))))
            .collect()
    });
    let csv = csv_bytes(std::iter::once(header).chain(rows));

    let meta = &m.meta;
    let kernel_info = match &provider {
        CostProvider::Divergence(c) => json!({
            "separable": c.kernel.is_separable(),
            "tol": c.params.tol,
            "max_iter": c.params.max_iter,
            "median_normalize": manifest.median_normalize,
            "signed_mode": manifest.signed_mode,
            "geometry": manifest.geometry,
        }),
        _ => serde_json::Value::Null,
    };
    let metadata = json!({
        "n": m.n(),
        "p": p,
        "beta": meta.beta,
        "epsilon": meta.epsilon,
        "gamma": meta.gamma,
        "cost": meta.cost_kind,
        "threads": args.threads,
        "solver": kernel_info,
        "unconverged_entries": meta.unconverged_entries,
        "sinkhorn_iterations": meta.sinkhorn_iterations,
        "failures": meta.failures.iter().map(|f| json!({
            "i": f.i, "j": f.j, "labels": [labels[f.i], labels[f.j]], "message": f.message,
        })).collect::<Vec<_>>(),
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    emit(args.out.as_deref(), &csv)?;
    if let Some(path) = &args.meta {
        emit(Some(path), &json_bytes(&metadata))?;
    }
    if meta.unconverged_entries > 0 {
        return Err(CliError::Partial(
            format!("{} frame pairs hit the iteration cap; see metadata", meta.unconverged_entries),
            sta_core::Error::Convergence {
                iterations: args.solver.max_iter,
                residual: f64::NAN,
            },
        ));
    }
    if let Some(f) = meta.failures.first() {
        return Err(CliError::Partial(
            format!("{} pairs failed and hold NaN; first ({}, {}): {}", meta.failures.len(), labels[f.i], labels[f.j], f.message),
            sta_core::Error::Domain(f.message.clone()),
        ));
    }
    Ok(())
}

pub fn shift(args: ShiftArgs) -> CliResult<()> {
    let x = match args.start {
        Some(s) => pulse(args.t_len, s, &args.levels)?,
        None => centered_pulse(args.t_len, &args.levels)?,
    };
    let pr = profile(&x, 0.0)?;
    let k_max = args.k_max.unwrap_or(pr.max_shift());
    let rows = shift_gap_experiment(&x, &args.betas, k_max)?;
    let header = ["beta", "k", "gap", "log_ratio_bound", "quadratic_bound"].map(String::from).to_vec();
    let body = rows.iter().map(|r| {
        vec![num(r.beta), r.k.to_string(), num(r.gap), num(r.log_ratio_bound), num(r.quadratic_bound)]
    });
    emit(args.out.as_deref(), &csv_bytes(std::iter::once(header).chain(body)))
}

fn parse_range(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once(':')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn parse_region(spec: &str, h: usize, w: usize) -> CliResult<Vec<usize>> {
    let (rows, cols) = spec
        .split_once('x')
        .and_then(|(r, c)| Some((parse_range(r)?, parse_range(c)?)))
        .ok_or_else(|| CliError::Usage(format!("region '{spec}' is not of the form R0:R1xC0:C1")))?;
    if rows.0 >= rows.1 || cols.0 >= cols.1 || rows.1 > h || cols.1 > w {
        return Err(sta_core::Error::Domain(format!("region '{spec}' is empty or outside the {h}x{w} grid")).into());
    }
    Ok(block_region(w, rows.0..rows.1, cols.0..cols.1))
}

pub fn blobs(args: BlobArgs) -> CliResult<()> {
    if args.times.len() != 2 {
        return Err(CliError::Usage(format!("--times needs two frames, got {}", args.times.len())));
    }
    let spec = BlobSpec {
        h: args.h,
        w: args.w,
        t_len: args.t_len,
        regions: [parse_region(&args.region1, args.h, args.w)?, parse_region(&args.region2, args.h, args.w)?],
        times: [args.times[0], args.times[1]],
        n_per_group: args.n,
        amplitude: (args.amp_min, args.amp_max),
        sigma_time: args.sigma_time,
        sigma_space: args.sigma_space,
        seed: args.seed,
    };
    let items = generate_blobs::<f64>(&spec)?;
    let mut files = Vec::with_capacity(items.len());
    let mut entries = Vec::with_capacity(items.len());
    for item in &items {
        let name = format!("{}.csv", item.series.label.as_deref().expect("generated items are labelled"));
        let rows = item.series.frames().map(|f| f.iter().map(|&v| num(v)).collect());
        files.push((name.clone(), csv_bytes(rows)));
        entries.push(ManifestItem {
            path: name.into(),
            label: format!("r{}_t{}", item.region + 1, spec.times[item.time]),
        });
    }
    let manifest = Manifest {
        items: entries,
        geometry: Some(GeometrySpec::Grid { h: spec.h, w: spec.w, l: 2.0 }),
        median_normalize: true,
        signed_mode: Default::default(),
    };
    let mut value = serde_json::to_value(&manifest).expect("serializable");
    value["generator"] = json!({
        "rng": "ChaCha8",
        "seed": spec.seed,
        "t_len": spec.t_len,
        "regions": [args.region1, args.region2],
        "times": spec.times,
        "n_per_group": spec.n_per_group,
        "amplitude": [spec.amplitude.0, spec.amplitude.1],
        "sigma_time": spec.sigma_time,
        "sigma_space": spec.sigma_space,
        "vertices": items.iter().map(|i| i.vertex).collect::<Vec<_>>(),
        "amplitudes": items.iter().map(|i| i.amplitude).collect::<Vec<_>>(),
    });
    fs::create_dir_all(&args.out_dir).map_err(|source| CliError::Output {
        path: args.out_dir.clone(),
        source,
    })?;
    for (name, bytes) in files {
        emit(Some(&args.out_dir.join(name)), &bytes)?;
    }
    emit(Some(&args.out_dir.join("manifest.json")), &json_bytes(&value))
}

pub fn delannoy(args: DelannoyArgs) -> CliResult<()> {
    if args.m_max == 0 || args.k_max == 0 {
        return Err(CliError::Usage("--m-max and --k-max must be at least 1".into()));
    }
    let rows = inequality_report(args.m_max, args.k_max);
    let header = ["m", "k", "D_m_mk", "phi", "psi", "slack_A", "slack_B", "slack_lemma"]
        .map(String::from)
        .to_vec();
    let body = rows.iter().map(|r| {
        vec![
            r.m.to_string(),
            r.k.to_string(),
            r.d_m_mk.to_string(),
            num(r.phi),
            num(r.psi),
            num(r.slack_a),
            num(r.slack_b),
            num(r.slack_lemma),
        ]
    });
    emit(args.out.as_deref(), &csv_bytes(std::iter::once(header).chain(body)))?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.all_hold()).map(|r| (r.m, r.k)).collect();
    if !failed.is_empty() {
        return Err(CliError::Partial(
            format!("{} (m, k) rows violate an inequality, first {:?}", failed.len(), failed[0]),
            sta_core::Error::Domain("inequality failure".into()),
        ));
    }
    Ok(())
}

fn sinkhorn_geometry(args: &SinkhornArgs) -> CliResult<Arc<GroundGeometry<f64>>> {
    let spec = if let Some(g) = &args.grid {
        let (h, w) = g
            .split_once('x')
            .and_then(|(h, w)| Some((h.trim().parse().ok()?, w.trim().parse().ok()?)))
            .ok_or_else(|| CliError::Usage(format!("--grid '{g}' is not of the form HxW")))?;
        GeometrySpec::Grid { h, w, l: args.l }
    } else {
        let path = args.graph.clone().expect("clap requires --grid or --graph");
        read_edges(&path)?;
        GeometrySpec::Graph { edges: path, p: None }
    };
    spec.build(Path::new(""), !args.no_normalize)
}

pub fn sinkhorn(args: SinkhornArgs) -> CliResult<()> {
    let x = read_vector(&args.x)?;
    let y = read_vector(&args.y)?;
    let geom = sinkhorn_geometry(&args)?;
    if x.len() != geom.p() || y.len() != geom.p() {
        return Err(sta_core::Error::Shape(format!(
            "x has {} entries, y has {}, geometry has p = {}",
            x.len(),
            y.len(),
            geom.p()
        ))
        .into());
    }
    let params = params(&args.solver, geom.p())?.with_plan(args.plan.is_some());
    let kernel = GibbsKernel::new(geom, params.epsilon)?;
    let (state, summary) = sinkhorn_unbalanced(&x, &y, &kernel, &params)?;
    let primal = primal_objective(&x, &y, &kernel, &params, &state)?;
    let div = sinkhorn_divergence(&x, &y, &kernel, &params)?;
    let report = json!({
        "p": kernel.p(),
        "epsilon": params.epsilon,
        "gamma": params.gamma,
        "tol": params.tol,
        "max_iter": params.max_iter,
        "iterations": state.iterations,
        "residual": state.residual,
        "converged": state.converged,
        "W": summary.w_value,
        "W_primal": primal,
        "S": div.value,
        "S_dual": div.dual_value,
        "S_converged": div.converged,
        "mass": summary.mass,
        "mass_x": summary.mass_x,
        "mass_y": summary.mass_y,
    });
    emit(args.out.as_deref(), &json_bytes(&report))?;
    if let Some(path) = &args.plan {
        let p = kernel.p();
        let plan = summary.plan.clone().unwrap_or_else(|| transport_plan(&state, &kernel));
        let rows = plan.chunks(p).map(|r| r.iter().map(|&v| num(v)).collect());
        emit(Some(path), &csv_bytes(rows))?;
    }
    if !(state.converged && div.converged) {
        state.ensure_converged()?;
        return Err(sta_core::Error::Convergence {
            iterations: params.max_iter,
            residual: f64::NAN,
        }
        .into());
    }
    Ok(())
}
