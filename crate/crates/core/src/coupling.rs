//! Global/local interface bookkeeping.
//!
//! Systems are numbered from `0`. Global input and output vectors are the
//! concatenation of the per-system blocks in system order, so system `k`
//! owns the contiguous slice `in_offsets[k]..in_offsets[k + 1]` of the global
//! input vector (and likewise for outputs).
//!
//! The connection matrix is kept as a sparse list of `(output, input)` pairs.
//! Every input must be fed by exactly one output; an output may feed any
//! number of inputs, including none.

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CouplingError {
    #[error("a coupling layout needs at least one system")]
    NoSystems,
    #[error("input {0} is not connected to any output")]
    UnconnectedInput(usize),
    #[error("input {0} is connected to several outputs")]
    MultiplyConnectedInput(usize),
    #[error("connection references {kind} index {index}, but only {len} exist")]
    IndexOutOfRange {
        kind: &'static str,
        index: usize,
        len: usize,
    },
    #[error("system index {index} out of range ({n_sys} systems)")]
    BadIndex { index: usize, n_sys: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}

fn check_len(expected: usize, actual: usize) -> Result<(), CouplingError> {
    if expected == actual {
        Ok(())
    } else {
        Err(CouplingError::LengthMismatch { expected, actual })
    }
}

fn prefix_sums(sizes: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    offsets.push(acc);
    for s in sizes {
        acc += s;
        offsets.push(acc);
    }
    offsets
}

/// Per-system input and output counts with their prefix sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemLayout {
    in_sizes: Vec<usize>,
    out_sizes: Vec<usize>,
    in_offsets: Vec<usize>,
    out_offsets: Vec<usize>,
}

impl SystemLayout {
    pub fn new(in_sizes: Vec<usize>, out_sizes: Vec<usize>) -> Result<Self, CouplingError> {
        if in_sizes.is_empty() {
            return Err(CouplingError::NoSystems);
        }
        check_len(in_sizes.len(), out_sizes.len())?;
        let in_offsets = prefix_sums(&in_sizes);
        let out_offsets = prefix_sums(&out_sizes);
        Ok(Self {
            in_sizes,
            out_sizes,
            in_offsets,
            out_offsets,
        })
    }

    pub fn n_sys(&self) -> usize {
        self.in_sizes.len()
    }

    pub fn in_sizes(&self) -> &[usize] {
        &self.in_sizes
    }

    pub fn out_sizes(&self) -> &[usize] {
        &self.out_sizes
    }

    pub fn in_offsets(&self) -> &[usize] {
        &self.in_offsets
    }

    pub fn out_offsets(&self) -> &[usize] {
        &self.out_offsets
    }

    pub fn n_in_tot(&self) -> usize {
        self.in_offsets[self.n_sys()]
    }

    pub fn n_out_tot(&self) -> usize {
        self.out_offsets[self.n_sys()]
    }

    pub fn in_range(&self, k: usize) -> Result<Range<usize>, CouplingError> {
        self.check_system(k)?;
        Ok(self.in_offsets[k]..self.in_offsets[k + 1])
    }

    pub fn out_range(&self, k: usize) -> Result<Range<usize>, CouplingError> {
        self.check_system(k)?;
        Ok(self.out_offsets[k]..self.out_offsets[k + 1])
    }

    /// System owning global input `j`.
    pub fn input_owner(&self, j: usize) -> Option<usize> {
        if j >= self.n_in_tot() {
            return None;
        }
        (0..self.n_sys()).find(|&k| j < self.in_offsets[k + 1])
    }

    /// System owning global output `i`.
    pub fn output_owner(&self, i: usize) -> Option<usize> {
        if i >= self.n_out_tot() {
            return None;
        }
        (0..self.n_sys()).find(|&k| i < self.out_offsets[k + 1])
    }

    fn check_system(&self, k: usize) -> Result<(), CouplingError> {
        if k < self.n_sys() {
            Ok(())
        } else {
            Err(CouplingError::BadIndex {
                index: k,
                n_sys: self.n_sys(),
            })
        }
    }
}

/// One nonzero entry of the connection matrix: `output` feeds `input`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Connection {
    pub output: usize,
    pub input: usize,
}

impl Connection {
    pub const fn new(output: usize, input: usize) -> Self {
        Self { output, input }
    }
}

impl From<(usize, usize)> for Connection {
    fn from((output, input): (usize, usize)) -> Self {
        Self { output, input }
    }
}

/// Values and time-derivatives sharing one layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlobalPair {
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
}

impl GlobalPair {
    pub fn new(values: Vec<f64>, derivatives: Vec<f64>) -> Result<Self, CouplingError> {
        check_len(values.len(), derivatives.len())?;
        Ok(Self {
            values,
            derivatives,
        })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            derivatives: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Stack as `(values; derivatives)`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.len());
        out.extend_from_slice(&self.values);
        out.extend_from_slice(&self.derivatives);
        out
    }

    /// Inverse of [`GlobalPair::stacked`].
    pub fn from_stacked(stacked: &[f64]) -> Result<Self, CouplingError> {
        if !stacked.len().is_multiple_of(2) {
            return Err(CouplingError::LengthMismatch {
                expected: stacked.len() + 1,
                actual: stacked.len(),
            });
        }
        let (v, d) = stacked.split_at(stacked.len() / 2);
        Ok(Self {
            values: v.to_vec(),
            derivatives: d.to_vec(),
        })
    }
}

/// Check that every input has exactly one source and every index is in range.
pub fn validate_graph(
    layout: &SystemLayout,
    connections: &[Connection],
) -> Result<(), CouplingError> {
    sources(layout, connections).map(|_| ())
}

fn sources(layout: &SystemLayout, connections: &[Connection]) -> Result<Vec<usize>, CouplingError> {
    let n_in = layout.n_in_tot();
    let n_out = layout.n_out_tot();
    let mut source: Vec<Option<usize>> = vec![None; n_in];
    for c in connections {
        if c.output >= n_out {
            return Err(CouplingError::IndexOutOfRange {
                kind: "output",
                index: c.output,
                len: n_out,
            });
        }
        if c.input >= n_in {
            return Err(CouplingError::IndexOutOfRange {
                kind: "input",
                index: c.input,
                len: n_in,
            });
        }
        if source[c.input].replace(c.output).is_some() {
            return Err(CouplingError::MultiplyConnectedInput(c.input));
        }
    }
    source
        .into_iter()
        .enumerate()
        .map(|(j, s)| s.ok_or(CouplingError::UnconnectedInput(j)))
        .collect()
}

/// A validated connection graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CouplingGraph {
    layout: SystemLayout,
    connections: Vec<Connection>,
    // source[j] = output feeding global input j
    source: Vec<usize>,
}

impl CouplingGraph {
    pub fn new<C: Into<Connection>>(
        layout: SystemLayout,
        connections: impl IntoIterator<Item = C>,
    ) -> Result<Self, CouplingError> {
        let connections: Vec<Connection> = connections.into_iter().map(Into::into).collect();
        let source = sources(&layout, &connections)?;
        Ok(Self {
            layout,
            connections,
            source,
        })
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    /// Output feeding global input `j`.
    pub fn source_of(&self, j: usize) -> Option<usize> {
        self.source.get(j).copied()
    }

    /// Apply the transposed connection matrix to a plain vector.
    pub fn dispatch_values(&self, outputs: &[f64]) -> Result<Vec<f64>, CouplingError> {
        check_len(self.layout.n_out_tot(), outputs.len())?;
        Ok(self.source.iter().map(|&i| outputs[i]).collect())
    }
}

/// Local inputs of system `k` as borrowed `(values, derivatives)` slices.
pub fn extract_inputs<'a>(
    layout: &SystemLayout,
    k: usize,
    global: &'a GlobalPair,
) -> Result<(&'a [f64], &'a [f64]), CouplingError> {
    check_len(layout.n_in_tot(), global.values.len())?;
    check_len(layout.n_in_tot(), global.derivatives.len())?;
    let r = layout.in_range(k)?;
    Ok((&global.values[r.clone()], &global.derivatives[r]))
}

/// Concatenate per-system `(y_k, dy_k)` into global `(y, dy)`.
pub fn rearrange_outputs(
    layout: &SystemLayout,
    per_system: &[GlobalPair],
) -> Result<GlobalPair, CouplingError> {
    check_len(layout.n_sys(), per_system.len())?;
    let mut out = GlobalPair {
        values: Vec::with_capacity(layout.n_out_tot()),
        derivatives: Vec::with_capacity(layout.n_out_tot()),
    };
    for (block, &size) in per_system.iter().zip(layout.out_sizes()) {
        check_len(size, block.values.len())?;
        check_len(size, block.derivatives.len())?;
        out.values.extend_from_slice(&block.values);
        out.derivatives.extend_from_slice(&block.derivatives);
    }
    Ok(out)
}

/// Inputs generated from outputs through the connections, values and
/// derivatives alike.
pub fn dispatch(graph: &CouplingGraph, outputs: &GlobalPair) -> Result<GlobalPair, CouplingError> {
    Ok(GlobalPair {
        values: graph.dispatch_values(&outputs.values)?,
        derivatives: graph.dispatch_values(&outputs.derivatives)?,
    })
}

/// Signed stacked mismatch `(u - Φᵀy ; du - Φᵀdy)`.
pub fn coupling_residual(
    graph: &CouplingGraph,
    inputs: &GlobalPair,
    outputs: &GlobalPair,
) -> Result<Vec<f64>, CouplingError> {
    let n = graph.layout().n_in_tot();
    check_len(n, inputs.values.len())?;
    check_len(n, inputs.derivatives.len())?;
    let d = dispatch(graph, outputs)?;
    let values = inputs.values.iter().zip(&d.values).map(|(u, y)| u - y);
    let derivs = inputs
        .derivatives
        .iter()
        .zip(&d.derivatives)
        .map(|(u, y)| u - y);
    Ok(values.chain(derivs).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity(n: usize) -> CouplingGraph {
        let layout = SystemLayout::new(vec![n], vec![n]).unwrap();
        CouplingGraph::new(layout, (0..n).map(|i| (i, i))).unwrap()
    }

    /// S1: inputs (v_C, x_C), output f_C; S2: input f_C, outputs (v_C, x_C).
    fn msd_graph() -> CouplingGraph {
        let layout = SystemLayout::new(vec![2, 1], vec![1, 2]).unwrap();
        CouplingGraph::new(layout, [(1, 0), (2, 1), (0, 2)]).unwrap()
    }

    #[test]
    fn single_identity_connection_is_valid() {
        let layout = SystemLayout::new(vec![1], vec![1]).unwrap();
        assert!(validate_graph(&layout, &[Connection::new(0, 0)]).is_ok());
    }

    #[test]
    fn double_source_is_rejected() {
        let layout = SystemLayout::new(vec![1], vec![2]).unwrap();
        let err = validate_graph(&layout, &[(0, 0).into(), (1, 0).into()]).unwrap_err();
        assert_eq!(err, CouplingError::MultiplyConnectedInput(0));
    }

    #[test]
    fn missing_source_is_rejected() {
        let layout = SystemLayout::new(vec![2], vec![1]).unwrap();
        let err = validate_graph(&layout, &[(0, 0).into()]).unwrap_err();
        assert_eq!(err, CouplingError::UnconnectedInput(1));
    }

    #[test]
    fn out_of_range_indices_are_rejected() {
        let layout = SystemLayout::new(vec![1], vec![1]).unwrap();
        assert!(matches!(
            validate_graph(&layout, &[(3, 0).into()]),
            Err(CouplingError::IndexOutOfRange { kind: "output", .. })
        ));
        assert!(matches!(
            validate_graph(&layout, &[(0, 0).into(), (0, 1).into()]),
            Err(CouplingError::IndexOutOfRange { kind: "input", .. })
        ));
    }

    #[test]
    fn msd_graph_is_valid() {
        let g = msd_graph();
        assert_eq!(g.layout().n_in_tot(), 3);
        assert_eq!(g.layout().n_out_tot(), 3);
        assert_eq!(g.source_of(2), Some(0));
    }

    #[test]
    fn extraction_slices_by_offsets() {
        let layout = SystemLayout::new(vec![2, 1], vec![0, 0]).unwrap();
        let g = GlobalPair::new(vec![1.0, 2.0, 3.0], vec![10.0, 20.0, 30.0]).unwrap();
        assert_eq!(
            extract_inputs(&layout, 1, &g).unwrap(),
            (&[3.0][..], &[30.0][..])
        );
        assert_eq!(
            extract_inputs(&layout, 0, &g).unwrap(),
            (&[1.0, 2.0][..], &[10.0, 20.0][..])
        );
        assert!(matches!(
            extract_inputs(&layout, 2, &g),
            Err(CouplingError::BadIndex { .. })
        ));

        let single = SystemLayout::new(vec![3], vec![0]).unwrap();
        assert_eq!(extract_inputs(&single, 0, &g).unwrap().0, &g.values[..]);
    }

    #[test]
    fn extraction_checks_length() {
        let layout = SystemLayout::new(vec![2], vec![0]).unwrap();
        let g = GlobalPair::zeros(3);
        assert!(matches!(
            extract_inputs(&layout, 0, &g),
            Err(CouplingError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn rearrangement_concatenates_in_order() {
        let layout = SystemLayout::new(vec![0, 0], vec![1, 2]).unwrap();
        let blocks = [
            GlobalPair::new(vec![1.0], vec![10.0]).unwrap(),
            GlobalPair::new(vec![2.0, 3.0], vec![20.0, 30.0]).unwrap(),
        ];
        let g = rearrange_outputs(&layout, &blocks).unwrap();
        assert_eq!(g.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(g.derivatives, vec![10.0, 20.0, 30.0]);

        let with_empty = SystemLayout::new(vec![0, 0, 0], vec![1, 0, 2]).unwrap();
        let blocks = [blocks[0].clone(), GlobalPair::zeros(0), blocks[1].clone()];
        assert_eq!(rearrange_outputs(&with_empty, &blocks).unwrap(), g);

        let bad = [GlobalPair::zeros(2), GlobalPair::zeros(2)];
        assert!(rearrange_outputs(&layout, &bad).is_err());
    }

    #[test]
    fn dispatch_examples() {
        let g = identity(2);
        let y = GlobalPair::new(vec![4.0, 5.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(dispatch(&g, &y).unwrap(), y);

        let fan = CouplingGraph::new(
            SystemLayout::new(vec![2], vec![1]).unwrap(),
            [(0, 0), (0, 1)],
        )
        .unwrap();
        let y = GlobalPair::new(vec![7.0], vec![0.0]).unwrap();
        assert_eq!(dispatch(&fan, &y).unwrap().values, vec![7.0, 7.0]);

        let msd = msd_graph();
        let y = GlobalPair::new(vec![1.0, 2.0, 3.0], vec![0.0; 3]).unwrap();
        let u = dispatch(&msd, &y).unwrap();
        assert_eq!(extract_inputs(msd.layout(), 0, &u).unwrap().0, &[2.0, 3.0]);
        assert_eq!(extract_inputs(msd.layout(), 1, &u).unwrap().0, &[1.0]);
    }

    #[test]
    fn residual_examples() {
        let g = identity(1);
        let u = GlobalPair::new(vec![1.0], vec![0.0]).unwrap();
        let y = GlobalPair::new(vec![0.5], vec![0.0]).unwrap();
        assert_eq!(coupling_residual(&g, &u, &y).unwrap(), vec![0.5, 0.0]);

        let fan = CouplingGraph::new(
            SystemLayout::new(vec![2], vec![1]).unwrap(),
            [(0, 0), (0, 1)],
        )
        .unwrap();
        let u = GlobalPair::new(vec![7.0, 6.0], vec![0.0, 0.0]).unwrap();
        let y = GlobalPair::new(vec![7.0], vec![0.0]).unwrap();
        assert_eq!(
            coupling_residual(&fan, &u, &y).unwrap(),
            vec![0.0, -1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn stacking_round_trips() {
        let p = GlobalPair::new(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(p.stacked(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(GlobalPair::from_stacked(&p.stacked()).unwrap(), p);
        assert!(GlobalPair::from_stacked(&[1.0, 2.0, 3.0]).is_err());
    }

    /// Random layout plus a random valid graph (each input picks one source).
    fn arb_graph() -> impl Strategy<Value = CouplingGraph> {
        (
            prop::collection::vec(0usize..4, 1..5),
            prop::collection::vec(1usize..4, 1..5),
        )
            .prop_flat_map(|(ins, outs)| {
                let n = ins.len().min(outs.len());
                let ins = ins[..n].to_vec();
                let outs = outs[..n].to_vec();
                let n_in: usize = ins.iter().sum();
                let n_out: usize = outs.iter().sum();
                (
                    Just(ins),
                    Just(outs),
                    prop::collection::vec(0..n_out, n_in..=n_in),
                )
            })
            .prop_map(|(ins, outs, src)| {
                let layout = SystemLayout::new(ins, outs).unwrap();
                CouplingGraph::new(layout, src.into_iter().enumerate().map(|(j, i)| (i, j)))
                    .unwrap()
            })
    }

    proptest! {
        #[test]
        fn dispatched_inputs_have_zero_residual(
            g in arb_graph(),
            seed in prop::collection::vec(-1e3f64..1e3, 24),
        ) {
            let n = g.layout().n_out_tot();
            let y = GlobalPair::new(seed[..n].to_vec(), seed[12..12 + n].to_vec()).unwrap();
            let u = dispatch(&g, &y).unwrap();
            let r = coupling_residual(&g, &u, &y).unwrap();
            prop_assert!(r.iter().all(|&x| x == 0.0));
        }

        #[test]
        fn dispatch_is_linear(
            g in arb_graph(),
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
            seed in prop::collection::vec(-1e3f64..1e3, 24),
        ) {
            let n = g.layout().n_out_tot();
            let y1 = GlobalPair::new(seed[..n].to_vec(), seed[..n].to_vec()).unwrap();
            let y2 = GlobalPair::new(seed[12..12 + n].to_vec(), seed[12..12 + n].to_vec()).unwrap();
            let comb = GlobalPair::new(
                y1.values.iter().zip(&y2.values).map(|(p, q)| a * p + b * q).collect(),
                y1.derivatives.iter().zip(&y2.derivatives).map(|(p, q)| a * p + b * q).collect(),
            ).unwrap();
            let lhs = dispatch(&g, &comb).unwrap();
            let d1 = dispatch(&g, &y1).unwrap();
            let d2 = dispatch(&g, &y2).unwrap();
            for j in 0..lhs.len() {
                let rhs = a * d1.values[j] + b * d2.values[j];
                prop_assert!((lhs.values[j] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
                let rhs = a * d1.derivatives[j] + b * d2.derivatives[j];
                prop_assert!((lhs.derivatives[j] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn extraction_inverts_concatenation(sizes in prop::collection::vec(0usize..5, 1..6)) {
            let layout = SystemLayout::new(sizes.clone(), vec![0; sizes.len()]).unwrap();
            let blocks: Vec<Vec<f64>> = sizes
                .iter()
                .enumerate()
                .map(|(k, &s)| (0..s).map(|i| (100 * k + i) as f64).collect())
                .collect();
            let flat: Vec<f64> = blocks.concat();
            let g = GlobalPair::new(flat.clone(), flat).unwrap();
            for (k, b) in blocks.iter().enumerate() {
                let (v, d) = extract_inputs(&layout, k, &g).unwrap();
                prop_assert_eq!(v, &b[..]);
                prop_assert_eq!(d, &b[..]);
            }
        }
    }
}
