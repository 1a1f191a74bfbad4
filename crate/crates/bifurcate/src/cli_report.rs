//! Config-driven front end: parses run configs, orchestrates the pipeline
//! and writes the CSV/JSON/SVG artifacts. All numeric output uses a fixed
//! 17-significant-digit format and fixed iteration orders, so identical
//! configs produce byte-identical files.

use crate::bifurcation_tracer::{
    compute_locus, scan_circle, BifurcationDiagram, CircleScan, PairSelector, RegionBox,
    TracerControls,
};
use crate::critical_points::{
    find_critical_points, labeled_points, trace_caustic, Caustic, PhaseWindow,
};
use crate::diagram_validator::{classify_topology, validate, RuleViolation, ValidateError};
use crate::field_models::{parse_family, GeneratingFamily, ParameterPoint, PhasePoint};
use crate::flow_engine::{
    connection_graph, integrate, saddle_manifold, Direction, EdgeKind, FlowControls,
    ManifoldKind, PhasePortraitGraph, Trajectory,
};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

mod svg;

/// 17 significant digits, locale-independent.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, thiserror::Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

/// Parsed run configuration with defaults for everything but the family.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub family: GeneratingFamily,
    pub region: RegionBox,
    pub window: PhaseWindow,
    pub out_dir: PathBuf,
    pub figures: bool,
    pub scan_r: f64,
    pub scan_n: usize,
    pub scan_pair: Option<(crate::critical_points::Label, crate::critical_points::Label)>,
    pub circle_n: usize,
    pub grid_n: usize,
    pub critpts_n: usize,
    pub all_branches: bool,
    pub caustic_step: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub step_factor: f64,
    pub fd_factor: f64,
    pub portrait_x: ParameterPoint,
}

impl RunConfig {
    pub fn tracer_controls(&self) -> TracerControls {
        let mut t = TracerControls::default();
        t.flow = self.flow_controls();
        t.window = self.window;
        t.circle_n = self.circle_n;
        t.grid_n = self.grid_n;
        t.all_branch_combos = self.all_branches;
        t.step_factor = self.step_factor;
        t.fd_factor = self.fd_factor;
        t.caustic_step = self.caustic_step;
        t
    }

    pub fn flow_controls(&self) -> FlowControls {
        let mut f = FlowControls::default();
        f.abs_tol = self.abs_tol;
        f.rel_tol = self.rel_tol;
        let half = 0.5
            * (self.window.y1_max - self.window.y1_min)
                .hypot(self.window.y2_max - self.window.y2_min);
        f.escape_radius = 10.0 * half;
        f
    }
}

/// Parse the line-oriented `key = value` config text (`#` starts a comment).
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut pairs: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(ConfigError {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError {
                line: line_no,
                message: "empty key or value".into(),
            });
        }
        pairs.insert(key, (value, line_no));
    }

    const KNOWN: &[&str] = &[
        "family",
        "bump.base",
        "bump.center",
        "bump.sigma",
        "bump.eps",
        "region",
        "phase_window",
        "out",
        "figures",
        "scan.r",
        "scan.n",
        "scan.pair",
        "locus.circle_n",
        "locus.grid_n",
        "locus.all_branches",
        "critpts.n",
        "caustic.step",
        "tol.abs",
        "tol.rel",
        "continuation.step",
        "continuation.fd",
        "portrait.x",
    ];
    for (k, (_, line)) in &pairs {
        if !KNOWN.contains(&k.as_str()) {
            return Err(ConfigError {
                line: *line,
                message: format!("unknown key `{k}`"),
            });
        }
    }

    let get = |k: &str| pairs.get(k).map(|(v, _)| v.clone());
    let line_of = |k: &str| pairs.get(k).map(|(_, l)| *l).unwrap_or(0);
    let family = parse_family(&get).map_err(|e| ConfigError {
        line: line_of("family"),
        message: e.to_string(),
    })?;

    let parse_f64 = |k: &str, default: f64| -> Result<f64, ConfigError> {
        match get(k) {
            None => Ok(default),
            Some(v) => v.parse::<f64>().map_err(|_| ConfigError {
                line: line_of(k),
                message: format!("bad number `{v}` for {k}"),
            }),
        }
    };
    let parse_usize = |k: &str, default: usize| -> Result<usize, ConfigError> {
        match get(k) {
            None => Ok(default),
            Some(v) => v.parse::<usize>().map_err(|_| ConfigError {
                line: line_of(k),
                message: format!("bad integer `{v}` for {k}"),
            }),
        }
    };
    let parse_quad = |k: &str, default: [f64; 4]| -> Result<[f64; 4], ConfigError> {
        match get(k) {
            None => Ok(default),
            Some(v) => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 4 {
                    return Err(ConfigError {
                        line: line_of(k),
                        message: format!("{k} needs `min1,max1,min2,max2`"),
                    });
                }
                let mut out = [0.0; 4];
                for (i, p) in parts.iter().enumerate() {
                    out[i] = p.parse().map_err(|_| ConfigError {
                        line: line_of(k),
                        message: format!("bad number `{p}` in {k}"),
                    })?;
                }
                if out[1] <= out[0] || out[3] <= out[2] {
                    return Err(ConfigError {
                        line: line_of(k),
                        message: format!("{k} is empty"),
                    });
                }
                Ok(out)
            }
        }
    };

    let region = parse_quad("region", [-2.0, 2.0, -2.0, 2.0])?;
    let window = parse_quad("phase_window", [-6.0, 6.0, -6.0, 6.0])?;
    let portrait_x = match get("portrait.x") {
        None => ParameterPoint::new(0.0, 0.0),
        Some(v) => parse_point(&v).map_err(|message| ConfigError {
            line: line_of("portrait.x"),
            message,
        })?,
    };
    let scan_pair = match get("scan.pair") {
        None => None,
        Some(v) if v == "auto" => None,
        Some(v) => {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            let parse_label = |s: &str| -> Result<crate::critical_points::Label, ConfigError> {
                use crate::critical_points::Label;
                match s {
                    "s1" => Ok(Label::S1),
                    "s2" => Ok(Label::S2),
                    "s3" => Ok(Label::S3),
                    "n" => Ok(Label::N),
                    other => Err(ConfigError {
                        line: line_of("scan.pair"),
                        message: format!("unknown label `{other}` (s1|s2|s3|n)"),
                    }),
                }
            };
            if parts.len() != 2 {
                return Err(ConfigError {
                    line: line_of("scan.pair"),
                    message: "scan.pair needs `label,label` or `auto`".into(),
                });
            }
            Some((parse_label(parts[0])?, parse_label(parts[1])?))
        }
    };
    let figures = match get("figures") {
        None => true,
        Some(v) => match v.as_str() {
            "true" | "on" | "1" => true,
            "false" | "off" | "0" => false,
            other => {
                return Err(ConfigError {
                    line: line_of("figures"),
                    message: format!("figures must be true/false, got `{other}`"),
                })
            }
        },
    };

    let tol_abs = parse_f64("tol.abs", 1e-10)?;
    let tol_rel = parse_f64("tol.rel", 1e-8)?;
    for (name, v) in [("tol.abs", tol_abs), ("tol.rel", tol_rel)] {
        if v <= 0.0 {
            return Err(ConfigError {
                line: line_of(name),
                message: format!("{name} must be positive"),
            });
        }
    }

    Ok(RunConfig {
        family,
        region: RegionBox::new(region[0], region[1], region[2], region[3]),
        window: PhaseWindow::new(window[0], window[1], window[2], window[3]),
        out_dir: PathBuf::from(get("out").unwrap_or_else(|| "out".into())),
        figures,
        scan_r: parse_f64("scan.r", 1.0)?,
        scan_n: parse_usize("scan.n", 720)?,
        scan_pair,
        circle_n: parse_usize("locus.circle_n", 720)?,
        grid_n: parse_usize("locus.grid_n", 41)?,
        critpts_n: parse_usize("critpts.n", 25)?,
        all_branches: match get("locus.all_branches").as_deref() {
            None | Some("true") | Some("on") | Some("1") => true,
            Some("false") | Some("off") | Some("0") => false,
            Some(other) => {
                return Err(ConfigError {
                    line: line_of("locus.all_branches"),
                    message: format!("locus.all_branches must be true/false, got `{other}`"),
                })
            }
        },
        caustic_step: parse_f64("caustic.step", 0.02)?,
        abs_tol: tol_abs,
        rel_tol: tol_rel,
        step_factor: parse_f64("continuation.step", 0.01)?,
        fd_factor: parse_f64("continuation.fd", 1e-5)?,
        portrait_x,
    })
}

fn parse_point(v: &str) -> Result<ParameterPoint, String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected `x1,x2`, got `{v}`"));
    }
    let a: f64 = parts[0]
        .parse()
        .map_err(|_| format!("bad number `{}`", parts[0]))?;
    let b: f64 = parts[1]
        .parse()
        .map_err(|_| format!("bad number `{}`", parts[1]))?;
    Ok(ParameterPoint::new(a, b))
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    Ok(parse_config(&text)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Caustic,
    Critpts,
    Portrait,
    Scan,
    Locus,
    Validate,
    Report,
}

/// File-level metadata carried by diagram.json and portrait.json.
#[derive(Serialize, Deserialize)]
struct Meta {
    family: String,
    /// Transversal placement is a choice: midpoint of the saddle pair,
    /// normal along the connecting direction, half-width half the distance.
    section_placement: String,
}

fn meta(family: &GeneratingFamily) -> Meta {
    Meta {
        family: family.name().to_string(),
        section_placement:
            "auto: saddle-pair midpoint, normal along the pair, half-width 0.5x distance".into(),
    }
}

#[derive(Serialize, Deserialize)]
struct DiagramFile {
    meta: Meta,
    diagram: BifurcationDiagram,
}

#[derive(Serialize, Deserialize)]
struct PortraitFile {
    meta: Meta,
    portrait: PhasePortraitGraph,
}

#[derive(Serialize)]
struct TopologyReport {
    letter: Option<String>,
    allowed: Option<bool>,
    case: Option<String>,
    note: Option<String>,
}

/// Run one subcommand. Returns the process exit code: 0 on success, 2 when
/// the validator found rule violations.
pub fn run(cmd: Subcommand, config: &RunConfig) -> Result<i32> {
    fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;
    match cmd {
        Subcommand::Caustic => {
            run_caustic(config)?;
            Ok(0)
        }
        Subcommand::Critpts => {
            run_critpts(config)?;
            Ok(0)
        }
        Subcommand::Portrait => {
            run_portrait(config)?;
            Ok(0)
        }
        Subcommand::Scan => {
            run_scan(config)?;
            Ok(0)
        }
        Subcommand::Locus => {
            run_locus(config)?;
            Ok(0)
        }
        Subcommand::Validate => run_validate(config),
        Subcommand::Report => run_report(config),
    }
}

fn out_path(config: &RunConfig, name: &str) -> PathBuf {
    config.out_dir.join(name)
}

fn run_caustic(config: &RunConfig) -> Result<Caustic> {
    let caustic = trace_caustic(&config.family, &config.window, config.caustic_step)?;
    let mut csv = String::from("arc_id,x1,x2,feature\n");
    for arc in &caustic.arcs {
        for p in &arc.points {
            let _ = writeln!(csv, "{},{},{},fold", arc.id, fmt_g17(p.x1), fmt_g17(p.x2));
        }
    }
    for v in &caustic.vertices {
        let arc_id = caustic
            .arcs
            .iter()
            .map(|a| {
                let pts: Vec<[f64; 2]> = a.points.iter().map(|p| p.coords()).collect();
                (a.id, crate::linalg::dist_to_polyline(v.coords(), &pts))
            })
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(id, _)| id)
            .unwrap_or(0);
        let _ = writeln!(
            csv,
            "{},{},{},cusp_vertex",
            arc_id,
            fmt_g17(v.x1),
            fmt_g17(v.x2)
        );
    }
    fs::write(out_path(config, "caustic.csv"), csv)?;
    if config.figures {
        let doc = svg::caustic_figure(&caustic, &config.region);
        fs::write(out_path(config, "caustic.svg"), doc)?;
    }
    Ok(caustic)
}

fn run_critpts(config: &RunConfig) -> Result<()> {
    let n = config.critpts_n;
    let region = config.region;
    let family = config.family;
    let window = config.window;
    let rows: Vec<String> = crate::parallel::map((0..n).collect(), |i| {
        let mut chunk = String::new();
        let x1 = region.x1_min + (i as f64 + 0.5) / n as f64 * (region.x1_max - region.x1_min);
        for j in 0..n {
            let x2 =
                region.x2_min + (j as f64 + 0.5) / n as f64 * (region.x2_max - region.x2_min);
            let x = ParameterPoint::new(x1, x2);
            let pts = labeled_points(&family, x, &window)
                .or_else(|_| find_critical_points(&family, x, &window))
                .unwrap_or_default();
            for p in pts {
                let _ = writeln!(
                    chunk,
                    "{},{},{},{},{},{},{},{}",
                    fmt_g17(x.x1),
                    fmt_g17(x.x2),
                    fmt_g17(p.y.y1),
                    fmt_g17(p.y.y2),
                    fmt_g17(p.eigenvalues[0]),
                    fmt_g17(p.eigenvalues[1]),
                    p.class,
                    p.label
                );
            }
        }
        chunk
    });
    let mut csv = String::from("x1,x2,y1,y2,lambda1,lambda2,class,label\n");
    for r in rows {
        csv.push_str(&r);
    }
    fs::write(out_path(config, "critical_points.csv"), csv)?;
    Ok(())
}

fn run_portrait(config: &RunConfig) -> Result<()> {
    let x = config.portrait_x;
    let pts = labeled_points(&config.family, x, &config.window)?;
    let controls = config.flow_controls();
    let graph = connection_graph(&config.family, x, &pts, &controls)?;
    let file = PortraitFile {
        meta: meta(&config.family),
        portrait: graph,
    };
    let json = serde_json::to_string_pretty(&file)?;
    fs::write(out_path(config, "portrait.json"), json)?;

    // the gradient line underlying the first edge, as a t,y1,y2 series
    if let Some(edge) = file.portrait.edges.first() {
        let traj: Option<Trajectory> = match edge.kind {
            EdgeKind::NodeToSaddle => {
                let saddle = &pts[edge.to];
                let mut c = controls.clone();
                c.critical_points = pts.clone();
                [1.0, -1.0].iter().find_map(|&sign| {
                    saddle_manifold(
                        &config.family,
                        x,
                        saddle,
                        ManifoldKind::Stable,
                        sign,
                        crate::flow_engine::seed_delta(1.0),
                        &c,
                    )
                    .ok()
                    .filter(|t| {
                        matches!(
                            t.termination,
                            crate::flow_engine::Termination::ConvergedToCriticalPoint { .. }
                        )
                    })
                })
            }
            EdgeKind::SaddleToSaddle => {
                let mut c = controls.clone();
                c.critical_points = pts.clone();
                integrate(
                    &config.family,
                    x,
                    PhasePoint::new(edge.samples[edge.samples.len() / 2][0], edge.samples[edge.samples.len() / 2][1]),
                    Direction::Forward,
                    &c,
                )
                .ok()
            }
        };
        if let Some(traj) = traj {
            write_trajectory_csv(&out_path(config, "trajectory.csv"), &traj)?;
        }
    }

    if config.figures {
        let doc = svg::portrait_figure(&file.portrait, &config.window);
        fs::write(out_path(config, "portrait.svg"), doc)?;
    }
    Ok(())
}

/// `trajectory.csv`: `t,y1,y2` rows of an integrated orbit.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut csv = String::from("t,y1,y2\n");
    for (t, y) in &traj.samples {
        let _ = writeln!(csv, "{},{},{}", fmt_g17(*t), fmt_g17(y.y1), fmt_g17(y.y2));
    }
    fs::write(path, csv)?;
    Ok(())
}

fn run_scan(config: &RunConfig) -> Result<CircleScan> {
    let controls = config.tracer_controls();
    let selector = match config.scan_pair {
        Some((i, j)) => PairSelector::Labeled(i, j),
        None => PairSelector::Auto,
    };
    let scan = scan_circle(
        &config.family,
        config.scan_r,
        config.scan_n,
        selector,
        &controls,
        None,
    )?;
    let mut csv = String::from("alpha,label_i,label_j,sep_u,sep_s,psi\n");
    for s in &scan.series {
        for (k, v) in s.values.iter().enumerate() {
            let psi = v.map(fmt_g17).unwrap_or_default();
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                fmt_g17(scan.alphas[k]),
                s.pair.0,
                s.pair.1,
                s.branches.0.symbol(),
                s.branches.1.symbol(),
                psi
            );
        }
    }
    fs::write(out_path(config, "scan.csv"), csv)?;
    let mut zcsv = String::from("alpha,label_i,label_j,sep_u,sep_s\n");
    for z in &scan.zeros {
        let _ = writeln!(
            zcsv,
            "{},{},{},{},{}",
            fmt_g17(z.alpha),
            z.pair.0,
            z.pair.1,
            z.branches.0.symbol(),
            z.branches.1.symbol()
        );
    }
    fs::write(out_path(config, "scan_zeros.csv"), zcsv)?;
    Ok(scan)
}

fn run_locus(config: &RunConfig) -> Result<BifurcationDiagram> {
    let controls = config.tracer_controls();
    let diagram = compute_locus(&config.family, &config.region, &controls)?;
    let mut csv = String::from("branch_id,label_i,label_j,sep_u,sep_s,x1,x2,psi_residual\n");
    for b in &diagram.branches {
        for (p, r) in b.points.iter().zip(&b.psi_residuals) {
            let res = if r.is_finite() {
                fmt_g17(*r)
            } else {
                String::new()
            };
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                b.id,
                b.pair.0,
                b.pair.1,
                b.branches.0.symbol(),
                b.branches.1.symbol(),
                fmt_g17(p.x1),
                fmt_g17(p.x2),
                res
            );
        }
    }
    fs::write(out_path(config, "branches.csv"), csv)?;
    let file = DiagramFile {
        meta: meta(&config.family),
        diagram,
    };
    let json = serde_json::to_string_pretty(&file)?;
    fs::write(out_path(config, "diagram.json"), json)?;
    if config.figures {
        let doc = svg::locus_figure(&file.diagram);
        fs::write(out_path(config, "locus.svg"), doc)?;
    }
    Ok(file.diagram)
}

fn run_validate(config: &RunConfig) -> Result<i32> {
    let path = out_path(config, "diagram.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {} (run `locus` first)", path.display()))?;
    let file: DiagramFile = serde_json::from_str(&text)?;
    let violations = validate(&file.diagram)?;
    write_validation(config, &violations, &file.diagram)?;
    Ok(if violations.is_empty() { 0 } else { 2 })
}

fn write_validation(
    config: &RunConfig,
    violations: &[RuleViolation],
    diagram: &BifurcationDiagram,
) -> Result<()> {
    let json = serde_json::to_string_pretty(violations)?;
    fs::write(out_path(config, "violations.json"), json)?;
    let topo = match classify_topology(diagram) {
        Ok(t) => TopologyReport {
            letter: Some(t.letter.to_string()),
            allowed: Some(t.allowed),
            case: t.case.map(|c| format!("{c:?}").to_lowercase()),
            note: None,
        },
        Err(ValidateError::NotUmbilic { sides }) => TopologyReport {
            letter: None,
            allowed: None,
            case: None,
            note: Some(format!(
                "not classified: caustic has {sides} labeled sides, the catalog needs 3"
            )),
        },
        Err(e) => TopologyReport {
            letter: None,
            allowed: None,
            case: None,
            note: Some(e.to_string()),
        },
    };
    fs::write(
        out_path(config, "topology.json"),
        serde_json::to_string_pretty(&topo)?,
    )?;
    Ok(())
}

fn run_report(config: &RunConfig) -> Result<i32> {
    run_caustic(config)?;
    run_critpts(config)?;
    run_portrait(config)?;
    run_scan(config)?;
    let diagram = run_locus(config)?;
    let violations = validate(&diagram)?;
    write_validation(config, &violations, &diagram)?;

    let mut md = String::new();
    let _ = writeln!(md, "# bifurcate report: {} family", config.family.name());
    let _ = writeln!(md);
    let _ = writeln!(
        md,
        "- region: [{}, {}] x [{}, {}]",
        config.region.x1_min, config.region.x1_max, config.region.x2_min, config.region.x2_max
    );
    let _ = writeln!(md, "- branches found: {}", diagram.branches.len());
    let _ = writeln!(md, "- intersections: {}", diagram.intersections.len());
    let _ = writeln!(md, "- rule violations: {}", violations.len());
    let _ = writeln!(md);
    let _ = writeln!(md, "## Artifacts");
    let _ = writeln!(md);
    for name in [
        "caustic.csv",
        "caustic.svg",
        "critical_points.csv",
        "portrait.json",
        "portrait.svg",
        "trajectory.csv",
        "scan.csv",
        "scan_zeros.csv",
        "branches.csv",
        "diagram.json",
        "locus.svg",
        "violations.json",
        "topology.json",
    ] {
        if out_path(config, name).exists() {
            let _ = writeln!(md, "- [{name}]({name})");
        }
    }
    fs::write(out_path(config, "report.md"), md)?;
    Ok(if violations.is_empty() { 0 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_with_defaults_and_comments() {
        let cfg = parse_config(
            "# a comment\nfamily = elliptic\nregion = -2, 2, -2, 2\n\nscan.r = 1.5 # trailing\n",
        )
        .unwrap();
        assert_eq!(cfg.family, GeneratingFamily::EllipticUmbilic);
        assert_eq!(cfg.scan_r, 1.5);
        assert_eq!(cfg.grid_n, 41);
        assert!(cfg.figures);
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let err = parse_config("family = elliptic\nregion = 1,2\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_config("family = elliptic\nnot a pair\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_config("family = elliptic\nbogus.key = 1\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_config("family = dog\n").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn g17_formatting_is_fixed_width_scientific() {
        assert_eq!(fmt_g17(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_g17(-0.5), "-5.0000000000000000e-1");
    }
}
