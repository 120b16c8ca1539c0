use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::em::{AngularFrequency, ReflectionCoefficient};

use super::paths::{Direction, LinkClass, LinkId, PathSet};
use super::scenario::{unit_from_angles, Point, Scenario};
use super::ChannelError;

/// Complex channel matrix of one link at one frequency; rows are receive
/// ports, columns transmit ports.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMatrix {
    pub matrix: DMatrix<Complex64>,
    pub link_class: LinkClass,
    pub omega: AngularFrequency,
}

impl LinkMatrix {
    pub fn dims(&self) -> (usize, usize) {
        self.matrix.shape()
    }
}

/// Which array sits at an end of a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Bs,
    Ue,
    Ris,
}

impl Node {
    /// Element offsets relative to the array center. The BS is a ULA along
    /// y, a UE a ULA along x, and the surface a row-major UPA in the x-z
    /// plane (columns along x, rows along z).
    pub fn element_offsets(self, scenario: &Scenario) -> Vec<Point> {
        let s = scenario.element_spacing;
        let centered = |i: usize, n: usize| (i as f64 - (n as f64 - 1.0) / 2.0) * s;
        match self {
            Node::Bs => (0..scenario.bs_antennas)
                .map(|i| [0.0, centered(i, scenario.bs_antennas), 0.0])
                .collect(),
            Node::Ue => (0..scenario.ue_antennas)
                .map(|i| [centered(i, scenario.ue_antennas), 0.0, 0.0])
                .collect(),
            Node::Ris => {
                let (rows, cols) = (scenario.ris_rows, scenario.ris_cols);
                (0..rows * cols)
                    .map(|n| [centered(n % cols, cols), 0.0, centered(n / cols, rows)])
                    .collect()
            }
        }
    }
}

pub fn link_nodes(link: LinkId) -> (Node, Node) {
    match link {
        LinkId::BsUe(_) => (Node::Bs, Node::Ue),
        LinkId::BsRis => (Node::Bs, Node::Ris),
        LinkId::RisUe(_) => (Node::Ris, Node::Ue),
    }
}

/// Far-field steering vector: element `i` at offset `p_i` sees
/// `exp(j k p_i . u)` for a plane wave along unit direction `u`.
pub fn steering_vector(
    offsets: &[Point],
    direction: Direction,
    wavenumber: f64,
) -> DVector<Complex64> {
    let u = unit_from_angles(direction.azimuth, direction.elevation);
    DVector::from_iterator(
        offsets.len(),
        offsets.iter().map(|p| {
            let phase = wavenumber * (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]);
            Complex64::from_polar(1.0, phase)
        }),
    )
}

/// Sum over paths of `gain * a_rx(arrival) * a_tx(departure)^T`, scaled by
/// the blockage attenuation when the link is blocked.
pub fn link_matrix(
    scenario: &Scenario,
    paths: &PathSet,
    link: LinkId,
    omega: AngularFrequency,
) -> Result<LinkMatrix, ChannelError> {
    if paths.link != link {
        return Err(ChannelError::DimensionMismatch(format!(
            "paths sampled for {:?}, requested {:?}",
            paths.link, link
        )));
    }
    let expected = scenario.path_counts.los + scenario.path_counts.nlos;
    if paths.paths.len() != expected {
        return Err(ChannelError::DimensionMismatch(format!(
            "{} paths, scenario expects {expected}",
            paths.paths.len()
        )));
    }
    link.endpoints(scenario)?;
    let (tx, rx) = link_nodes(link);
    let tx_offsets = tx.element_offsets(scenario);
    let rx_offsets = rx.element_offsets(scenario);
    let k = omega.wavenumber();

    let mut matrix = DMatrix::<Complex64>::zeros(rx_offsets.len(), tx_offsets.len());
    for path in &paths.paths {
        let a_rx = steering_vector(&rx_offsets, path.arrival, k) * path.gain;
        let a_tx = steering_vector(&tx_offsets, path.departure, k);
        matrix.ger(
            Complex64::new(1.0, 0.0),
            &a_rx,
            &a_tx,
            Complex64::new(1.0, 0.0),
        );
    }
    if paths.link_blocked {
        matrix *= Complex64::new(10f64.powf(-scenario.blockage_attenuation_db / 20.0), 0.0);
    }
    Ok(LinkMatrix {
        matrix,
        link_class: link.class(),
        omega,
    })
}

/// `H_direct + H_ris_ue * diag(v) * H_bs_ris`, all at the same frequency.
pub fn effective_channel(
    h_direct: &LinkMatrix,
    h_bs_ris: &LinkMatrix,
    h_ris_ue: &LinkMatrix,
    v: &[ReflectionCoefficient],
) -> Result<LinkMatrix, ChannelError> {
    if h_direct.omega != h_bs_ris.omega || h_direct.omega != h_ris_ue.omega {
        return Err(ChannelError::FrequencyMismatch);
    }
    let (rx, tx) = h_direct.dims();
    let (ris_rx, bs_tx) = h_bs_ris.dims();
    let (ue_rx, ris_tx) = h_ris_ue.dims();
    if ue_rx != rx || bs_tx != tx || ris_rx != ris_tx || v.len() != ris_tx {
        return Err(ChannelError::DimensionMismatch(format!(
            "direct {rx}x{tx}, bs-ris {ris_rx}x{bs_tx}, ris-ue {ue_rx}x{ris_tx}, v {}",
            v.len()
        )));
    }
    if let Some(i) = v.iter().position(|c| !(c.norm() <= 1.0 + 1e-9)) {
        return Err(ChannelError::NonPassiveReflection(i));
    }
    let mut scaled = h_ris_ue.matrix.clone();
    for (mut col, coeff) in scaled.column_iter_mut().zip(v) {
        col *= coeff.0;
    }
    let mut matrix = h_direct.matrix.clone();
    matrix.gemm(
        Complex64::new(1.0, 0.0),
        &scaled,
        &h_bs_ris.matrix,
        Complex64::new(1.0, 0.0),
    );
    Ok(LinkMatrix {
        matrix,
        link_class: LinkClass::BsUe,
        omega: h_direct.omega,
    })
}
