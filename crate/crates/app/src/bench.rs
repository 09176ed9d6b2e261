//! Timing table: initialisation seconds and runtime frames per second for
//! every tetrisation × energy × blend function.

use std::fmt;
use std::time::Instant;

use serde::Serialize;
use tetriblend_core::{
    blend, precompute, BlendFunction, BlendModel, BlendRequest, Energy, EsOptions, Result, TetrisationMethod,
    TriangleMesh,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchColumn {
    pub method: TetrisationMethod,
    pub energy: Energy,
    pub init_seconds: f64,
    pub fps_p: f64,
    pub fps_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTable {
    pub vertex_count: usize,
    pub face_count: usize,
    pub iterations: usize,
    /// Face, edge, vertex; `E_T` before `E_S` within each.
    pub columns: Vec<BenchColumn>,
}

impl BenchTable {
    pub fn column(&self, method: TetrisationMethod, energy: Energy) -> Option<&BenchColumn> {
        self.columns.iter().find(|c| c.method == method && c.energy == energy)
    }
}

/// Mean wall seconds of `iterations` blends after one warm-up run.
pub fn time_runtime(model: &BlendModel, request: &BlendRequest, iterations: usize) -> Result<f64> {
    blend(model, request)?;
    let start = Instant::now();
    for _ in 0..iterations {
        blend(model, request)?;
    }
    Ok(start.elapsed().as_secs_f64() / iterations.max(1) as f64)
}

/// Builds one model per tetrisation and times it. Initialisation is measured
/// once per tetrisation: both energies share the same factorization.
pub fn run_bench(
    rest: &TriangleMesh,
    targets: &[TriangleMesh],
    weights: &[f64],
    iterations: usize,
    es_options: EsOptions,
) -> Result<BenchTable> {
    let mut columns = Vec::with_capacity(6);
    for method in TetrisationMethod::ALL {
        let start = Instant::now();
        let model = precompute(rest, targets, method, None)?;
        let init_seconds = start.elapsed().as_secs_f64();
        for energy in Energy::ALL {
            let mut fps = [0.0; 2];
            for (slot, blend_fn) in [BlendFunction::P, BlendFunction::C].into_iter().enumerate() {
                let request = BlendRequest { weights: weights.to_vec(), energy, blend_fn, es_options };
                fps[slot] = 1.0 / time_runtime(&model, &request, iterations)?;
            }
            columns.push(BenchColumn { method, energy, init_seconds, fps_p: fps[0], fps_c: fps[1] });
            log::debug!("bench {method} {energy}: P {:.2} fps, C {:.2} fps", fps[0], fps[1]);
        }
    }
    Ok(BenchTable { vertex_count: rest.vertex_count(), face_count: rest.face_count(), iterations, columns })
}

impl fmt::Display for BenchTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} vertices, {} faces, {} runtime iterations per cell",
            self.vertex_count, self.face_count, self.iterations
        )?;
        write!(f, "{:<16}", "")?;
        for method in TetrisationMethod::ALL {
            write!(f, "{:^24}", method.as_str())?;
        }
        writeln!(f)?;
        write!(f, "{:<16}", "")?;
        for c in &self.columns {
            write!(f, "{:>12}", c.energy.as_str())?;
        }
        writeln!(f)?;
        let rows: [(&str, fn(&BenchColumn) -> f64); 3] = [
            ("Init (s)", |c| c.init_seconds),
            ("fps Blend_P", |c| c.fps_p),
            ("fps Blend_C", |c| c.fps_c),
        ];
        for (label, value) in rows {
            write!(f, "{label:<16}")?;
            for c in &self.columns {
                write!(f, "{:>12.4}", value(c))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
