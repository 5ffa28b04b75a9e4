use std::hint::black_box;
use std::time::Instant;

use rpnet_core::geometry::PointCloud;
use rpnet_core::models::{build_preset, ModelSpec, Operator, RpNet};
use rpnet_core::nn::{Flops, Params};
use rpnet_core::relation::{
    count_flops, count_flops_rsconv, count_flops_sa, count_params, count_params_rsconv, count_params_sa,
    gra_forward_counted, rsconv_forward_counted, sa_forward_counted, GeometricRelationSpec, GraConfig, GraParams,
    GroupInput, RsConvParams, SaParams,
};
use rpnet_core::rng::stream;
use rpnet_core::tensor::gradcheck::random_tensor;
use rpnet_core::Tensor;
use serde::Serialize;

use crate::config::{BenchConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::setup::{csv_writer, flush};

pub const BENCH_HEADER: [&str; 11] = [
    "config",
    "c_in",
    "c_out",
    "group",
    "centroids",
    "params",
    "macs_analytic",
    "macs_instrumented",
    "median_ms",
    "iqr_ms",
    "reps",
];
pub const NETWORK_HEADER: [&str; 4] = ["network", "operator", "params", "macs"];

/// Printed beside the measured network ratios for side-by-side reading.
pub const REFERENCE_CLAIM: &str = "around 30% parameters and 50% computation saving";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub config: String,
    pub c_in: usize,
    pub c_out: usize,
    pub group: usize,
    pub centroids: usize,
    pub params: usize,
    pub macs_analytic: u64,
    pub macs_instrumented: u64,
    pub median_ms: f64,
    pub iqr_ms: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkRow {
    pub network: String,
    pub operator: String,
    pub params: usize,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    pub network: [NetworkRow; 2],
}

impl BenchOutcome {
    /// `1 - GRA/SA` for parameters and MACs of the whole network.
    pub fn network_savings(&self) -> (f64, f64) {
        let [g, s] = &self.network;
        (1.0 - g.params as f64 / s.params as f64, 1.0 - g.macs as f64 / s.macs as f64)
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median and interquartile range of `reps` timed calls, in milliseconds.
fn time_ms(warmup: usize, reps: usize, mut f: impl FnMut()) -> (f64, f64) {
    for _ in 0..warmup {
        f();
    }
    let mut t: Vec<f64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    t.sort_by(f64::total_cmp);
    (quantile(&t, 0.5), quantile(&t, 0.75) - quantile(&t, 0.25))
}

struct Workload {
    f_i: Tensor,
    f_ij: Tensor,
    p_i: Tensor,
    p_ij: Tensor,
}

impl Workload {
    fn input(&self) -> GroupInput<'_> {
        GroupInput { f_i: &self.f_i, f_ij: &self.f_ij, p_i: &self.p_i, p_ij: &self.p_ij }
    }
}

/// Operator-level rows at one width: GRA default, GRA with `r2 = 1`, a
/// two-layer SA and RS-Conv, all mapping `c → c` over the same groups.
pub fn bench_width(c: usize, bc: &BenchConfig, seed: u64) -> CliResult<Vec<BenchRow>> {
    let (n, g) = (bc.centroids, bc.group);
    let mut rng = stream(seed, "bench").child(c as u64).rng();
    let w = Workload {
        f_i: random_tensor(&mut rng, &[n, c]),
        f_ij: random_tensor(&mut rng, &[n, g, c]),
        p_i: random_tensor(&mut rng, &[n, 3]),
        p_ij: random_tensor(&mut rng, &[n, g, 3]),
    };
    let row = |config: &str, params: usize, macs_analytic: u64, macs_instrumented: u64, (median_ms, iqr_ms): (f64, f64)| BenchRow {
        config: config.into(),
        c_in: c,
        c_out: c,
        group: g,
        centroids: n,
        params,
        macs_analytic,
        macs_instrumented,
        median_ms,
        iqr_ms,
        reps: bc.reps,
    };
    let mut rows = Vec::new();

    let default = GraConfig::new(c, c, g);
    let wide = GraConfig { r2: 1, ..default };
    for (name, cfg) in [("gra_default", default), ("gra_r2_1", wide)] {
        let p = GraParams::init(&cfg, &mut rng)?;
        let mut fl = Flops::default();
        gra_forward_counted(w.input(), &cfg, &p, &mut fl)?;
        let t = time_ms(bc.warmup, bc.reps, || {
            black_box(gra_forward_counted(w.input(), &cfg, &p, &mut Flops::default()).expect("validated shapes"));
        });
        rows.push(row(name, p.count_params(), count_flops(&cfg, n, g), fl.macs(), t));
    }

    let widths = [c, c];
    let sa = SaParams::init(c, &widths, None, &mut rng)?;
    let mut fl = Flops::default();
    sa_forward_counted(&w.f_ij, &sa, &mut fl)?;
    let t = time_ms(bc.warmup, bc.reps, || {
        black_box(sa_forward_counted(&w.f_ij, &sa, &mut Flops::default()).expect("validated shapes"));
    });
    rows.push(row("sa", count_params_sa(c, &widths, None), count_flops_sa(c, &widths, None, n, g), fl.macs(), t));

    let geo = GeometricRelationSpec::all();
    let hidden = (c / 4).max(1);
    let rs = RsConvParams::init(geo, c, hidden, c, &mut rng)?;
    let mut fl = Flops::default();
    rsconv_forward_counted(w.input(), &rs, &mut fl)?;
    let t = time_ms(bc.warmup, bc.reps, || {
        black_box(rsconv_forward_counted(w.input(), &rs, &mut Flops::default()).expect("validated shapes"));
    });
    rows.push(row(
        "rsconv",
        count_params_rsconv(&geo, c, hidden, c),
        count_flops_rsconv(&geo, c, hidden, c, n, g),
        fl.macs(),
        t,
    ));

    if rows.iter().zip([count_params(&default), count_params(&wide), sa.count_params(), rs.count_params()]).any(|(r, p)| r.params != p) {
        return Err(CliError::Check(format!("analytic and stored parameter counts disagree at C={c}")));
    }
    Ok(rows)
}

/// The configured classification preset built with GRA blocks and with
/// two-layer SA blocks of the same widths, counted on one random cloud.
pub fn network_rows(cfg: &RunConfig) -> CliResult<[NetworkRow; 2]> {
    let spec = build_preset(&cfg.bench.network_preset, cfg.dataset.num_classes(), &[])?;
    let n = spec.num_points;
    let sa = RpNet::new(ModelSpec { operator: Operator::Sa, ..spec.clone() }, cfg.seed)?;
    let gra = RpNet::new(spec, cfg.seed)?;
    let cloud = PointCloud::new(random_tensor(&mut stream(cfg.seed, "bench-cloud").rng(), &[n, 3]), None, None)?;
    let row = |m: &RpNet, op: &str| -> CliResult<NetworkRow> {
        Ok(NetworkRow {
            network: cfg.bench.network_preset.clone(),
            operator: op.into(),
            params: m.count_params(),
            macs: m.forward_counted(&cloud)?.1.macs(),
        })
    };
    Ok([row(&gra, "gra")?, row(&sa, "sa")?])
}

pub fn cmd_bench(cfg: &RunConfig) -> CliResult<BenchOutcome> {
    let bc = &cfg.bench;
    if bc.reps < 30 || bc.channels.is_empty() || bc.group == 0 || bc.centroids == 0 {
        return Err(CliError::Config("bench needs reps >= 30 and non-empty channels, group and centroids".into()));
    }
    cfg.save()?;
    let mut rows = Vec::new();
    for &c in &bc.channels {
        rows.extend(bench_width(c, bc, cfg.seed)?);
    }
    let out = BenchOutcome { rows, network: network_rows(cfg)? };

    let path = cfg.out_dir.join("bench.csv");
    let mut w = csv_writer(&path, &BENCH_HEADER)?;
    for r in &out.rows {
        w.serialize(r)?;
    }
    flush(w, &path)?;
    let path = cfg.out_dir.join("network.csv");
    let mut w = csv_writer(&path, &NETWORK_HEADER)?;
    for r in &out.network {
        w.serialize(r)?;
    }
    flush(w, &path)?;

    println!(
        "{:<12} {:>5} {:>9} {:>13} {:>13} {:>10} {:>9}",
        "config", "C", "params", "MACs", "MACs (instr)", "median ms", "IQR ms"
    );
    for r in &out.rows {
        println!(
            "{:<12} {:>5} {:>9} {:>13} {:>13} {:>10.3} {:>9.3}",
            r.config, r.c_in, r.params, r.macs_analytic, r.macs_instrumented, r.median_ms, r.iqr_ms
        );
    }
    let (dp, dm) = out.network_savings();
    let [g, s] = &out.network;
    println!();
    println!("{} network, GRA vs SA blocks: {} vs {} params, {} vs {} MACs", g.network, g.params, s.params, g.macs, s.macs);
    println!("measured saving: {:.1}% parameters, {:.1}% computation", 100.0 * dp, 100.0 * dm);
    println!("reference claim: {REFERENCE_CLAIM}");

    if let Some(r) = out.rows.iter().find(|r| r.macs_analytic != r.macs_instrumented) {
        return Err(CliError::Check(format!(
            "{} at C={}: analytic MACs {} != instrumented {}",
            r.config, r.c_in, r.macs_analytic, r.macs_instrumented
        )));
    }
    Ok(out)
}
