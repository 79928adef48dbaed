use num_complex::Complex64;

use super::Network;
use crate::Error;

/// Two-port admittance of a single branch in the standard Π model.
///
/// Injected currents are `I_f = yff V_f + yft V_t` and `I_t = ytf V_f + ytt V_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

impl BranchAdmittance {
    pub fn from_params(r: f64, x: f64, b_sh: f64, tap: f64, shift: f64) -> Self {
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(r, x);
        let charging = Complex64::new(0.0, b_sh / 2.0);
        let t = Complex64::from_polar(tap, shift);
        let ytt = ys + charging;
        BranchAdmittance {
            yff: ytt / (tap * tap),
            yft: -ys / t.conj(),
            ytf: -ys / t,
            ytt,
        }
    }

    pub fn of(branch: &super::Branch) -> Self {
        Self::from_params(branch.r, branch.x, branch.b_sh, branch.tap, branch.shift)
    }
}

/// Sparse complex nodal admittance matrix, row-major with sorted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    n: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl AdmittanceMatrix {
    pub fn zeros(n: usize) -> Self {
        AdmittanceMatrix {
            n,
            rows: vec![Vec::new(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, i: usize, j: usize, value: Complex64) {
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&j, |&(col, _)| col) {
            Ok(pos) => row[pos].1 += value,
            Err(pos) => row.insert(pos, (j, value)),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let row = &self.rows[i];
        match row.binary_search_by_key(&j, |&(col, _)| col) {
            Ok(pos) => row[pos].1,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Conductance `G_ij`.
    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).re
    }

    /// Susceptance `B_ij`.
    pub fn b(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).im
    }

    /// Stored entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut out = vec![vec![Complex64::new(0.0, 0.0); self.n]; self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                out[i][j] = v;
            }
        }
        out
    }
}

/// Assembles the nodal admittance matrix from in-service branches and bus shunts.
pub fn build_admittance(network: &Network) -> Result<AdmittanceMatrix, Error> {
    let idx = network.indexed()?;
    let mut y = AdmittanceMatrix::zeros(network.buses.len());
    for (k, bus) in network.buses.iter().enumerate() {
        if bus.gs != 0.0 || bus.bs != 0.0 {
            y.add(k, k, Complex64::new(bus.gs, bus.bs));
        }
    }
    for (k, br) in network.branches.iter().enumerate() {
        if br.x == 0.0 {
            return Err(Error::InvalidNetwork(format!("branch {k} has zero reactance")));
        }
        if !br.status {
            continue;
        }
        let (f, t) = idx.branch_ends[k];
        let ya = BranchAdmittance::of(br);
        y.add(f, f, ya.yff);
        y.add(f, t, ya.yft);
        y.add(t, f, ya.ytf);
        y.add(t, t, ya.ytt);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::fixtures::*;
    use crate::netmodel::{BusKind, Network};

    fn two_bus(r: f64, x: f64, b_sh: f64) -> Network {
        Network {
            base_mva: 100.0,
            buses: vec![bus(1, BusKind::Slack, 0.0), bus(2, BusKind::Pq, 0.5)],
            branches: vec![line(1, 2, r, x, b_sh)],
            generators: vec![gen(1, 1.0, 10.0)],
        }
    }

    /// Dense assembly straight from the Π-model definitions.
    fn dense_oracle(net: &Network) -> Vec<Vec<Complex64>> {
        let n = net.buses.len();
        let pos = net.bus_index();
        let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for (k, b) in net.buses.iter().enumerate() {
            y[k][k] += Complex64::new(b.gs, b.bs);
        }
        for br in net.branches.iter().filter(|b| b.status) {
            let (i, j) = (pos[&br.from_bus], pos[&br.to_bus]);
            let z = Complex64::new(br.r, br.x);
            let series = z.inv();
            let half_b = Complex64::new(0.0, br.b_sh * 0.5);
            let a = Complex64::new(br.tap * br.shift.cos(), br.tap * br.shift.sin());
            y[i][i] += (series + half_b) / (a * a.conj());
            y[j][j] += series + half_b;
            y[i][j] -= series / a.conj();
            y[j][i] -= series / a;
        }
        y
    }

    #[test]
    fn pure_reactance_two_bus() {
        let y = build_admittance(&two_bus(0.0, 0.1, 0.0)).unwrap();
        assert!((y.get(0, 1) - Complex64::new(0.0, 10.0)).norm() < 1e-12);
        assert!((y.get(0, 0) - Complex64::new(0.0, -10.0)).norm() < 1e-12);
    }

    #[test]
    fn lossy_line_with_charging_matches_dense_oracle() {
        let net = two_bus(0.01, 0.1, 0.04);
        let y = build_admittance(&net).unwrap();
        let series = Complex64::new(1.0, 0.0) / Complex64::new(0.01, 0.1);
        assert!((y.get(0, 0) - (series + Complex64::new(0.0, 0.02))).norm() < 1e-12);
        let oracle = dense_oracle(&net);
        for (i, row) in oracle.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((y.get(i, j) - v).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn transformer_matches_dense_oracle() {
        let mut net = two_bus(0.002, 0.05, 0.0);
        net.branches[0].tap = 0.97;
        net.branches[0].shift = 0.05;
        net.buses[1].gs = 0.1;
        net.buses[1].bs = -0.3;
        let y = build_admittance(&net).unwrap();
        let oracle = dense_oracle(&net);
        for i in 0..2 {
            for j in 0..2 {
                assert!((y.get(i, j) - oracle[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_network_is_zero() {
        let net = Network {
            base_mva: 100.0,
            buses: vec![bus(1, BusKind::Slack, 0.0), bus(2, BusKind::Pq, 0.0)],
            branches: Vec::new(),
            generators: Vec::new(),
        };
        let y = build_admittance(&net).unwrap();
        assert_eq!(y.nnz(), 0);
    }

    #[test]
    fn zero_reactance_rejected() {
        assert!(build_admittance(&two_bus(0.01, 0.0, 0.0)).is_err());
    }

    #[test]
    fn removing_branch_touches_four_entries() {
        let mut net = two_bus(0.01, 0.1, 0.02);
        net.buses.push(bus(3, BusKind::Pq, 0.1));
        net.branches.push(line(2, 3, 0.02, 0.2, 0.01));
        net.branches.push(line(1, 3, 0.03, 0.25, 0.0));
        let before = build_admittance(&net).unwrap().to_dense();
        let after = build_admittance(&net.with_open_branches(&[2])).unwrap().to_dense();
        let mut changed = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                if (before[i][j] - after[i][j]).norm() > 0.0 {
                    changed.push((i, j));
                }
            }
        }
        assert_eq!(changed, vec![(0, 0), (0, 2), (2, 0), (2, 2)]);
    }
}
