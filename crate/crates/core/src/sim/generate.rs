use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Column, ObservationTable};
use crate::error::Result;

use super::model::{Compiled, StructuralModel};

/// Rows per independently seeded simulation batch.
pub(crate) const CHUNK: usize = 1024;

pub(crate) fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Draws every variable in topological order into `v`.
pub(crate) fn draw_unit(m: &Compiled, v: &mut [f64], rng: &mut ChaCha8Rng, scratch: &mut Vec<f64>) {
    for &i in &m.order {
        v[i] = m.laws[i].draw(v, rng, scratch);
    }
}

/// `n` independent draws from `model`. The latent confounder is included
/// only when `expose_latent` is set. The group column is categorical with
/// labels `0`, `1`, …; every other column is numeric.
pub fn generate(
    model: &StructuralModel,
    n: usize,
    seed: u64,
    expose_latent: bool,
) -> Result<ObservationTable> {
    let m = model.compile()?;
    let nv = m.names.len();
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|k| {
            let rows = CHUNK.min(n - k * CHUNK);
            let mut rng = chunk_rng(seed, k);
            let mut scratch = Vec::new();
            let mut out = vec![0.0; rows * nv];
            for unit in out.chunks_mut(nv) {
                draw_unit(&m, unit, &mut rng, &mut scratch);
            }
            out
        })
        .collect();

    let mut columns = Vec::with_capacity(nv);
    for i in 0..nv {
        if m.latent == Some(i) && !expose_latent {
            continue;
        }
        let values: Vec<f64> = chunks
            .iter()
            .flat_map(|c| c.chunks(nv).map(move |u| u[i]))
            .collect();
        columns.push(if i == m.group {
            Column::categorical(
                m.names[i].clone(),
                (0..m.n_groups).map(|k| k.to_string()).collect(),
                values.iter().map(|&x| x as u32).collect(),
            )
        } else {
            Column::numeric(m.names[i].clone(), values)
        });
    }
    ObservationTable::from_columns(columns)
}
