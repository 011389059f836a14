use num_complex::Complex64;

use super::NetworkCase;

/// Sparse bus admittance matrix in row-compressed form. Each row holds
/// `(column, value)` pairs sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl AdmittanceMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            rows: vec![Vec::new(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        self.rows[i]
            .binary_search_by_key(&k, |&(c, _)| c)
            .map(|p| self.rows[i][p].1)
            .unwrap_or_default()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn add(&mut self, i: usize, k: usize, value: Complex64) {
        let row = &mut self.rows[i];
        match row.binary_search_by_key(&k, |&(c, _)| c) {
            Ok(p) => row[p].1 += value,
            Err(p) => row.insert(p, (k, value)),
        }
    }

    /// `(Y v)_i`
    pub fn row_dot(&self, i: usize, v: &[Complex64]) -> Complex64 {
        self.rows[i].iter().map(|&(k, y)| y * v[k]).sum()
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim()).map(|i| self.row_dot(i, v)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let n = self.dim();
        let mut out = vec![vec![Complex64::default(); n]; n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(k, y) in row {
                out[i][k] = y;
            }
        }
        out
    }
}

/// Assemble the full bus admittance matrix (pi branch model with off-nominal
/// taps and phase shifters, bus shunts on the diagonal).
pub fn build_admittance(case: &NetworkCase) -> AdmittanceMatrix {
    let (mut series, shunt) = build_admittance_parts(case);
    for i in 0..shunt.dim() {
        for &(k, y) in shunt.row(i) {
            series.add(i, k, y);
        }
    }
    series
}

/// Split assembly: the series-impedance network (including the transformer
/// tap scaling of the series term) and the shunt part (line charging plus bus
/// shunts). Their sum equals [`build_admittance`].
pub fn build_admittance_parts(case: &NetworkCase) -> (AdmittanceMatrix, AdmittanceMatrix) {
    let n = case.bus_count();
    let pos = case.bus_positions();
    let mut series = AdmittanceMatrix::zeros(n);
    let mut shunt = AdmittanceMatrix::zeros(n);

    for (i, bus) in case.buses.iter().enumerate() {
        // make sure every diagonal is structurally present
        series.add(i, i, Complex64::default());
        let y = Complex64::new(bus.shunt_g, bus.shunt_b);
        if y != Complex64::default() {
            shunt.add(i, i, y);
        }
    }

    for br in case.branches.iter().filter(|b| b.in_service) {
        let (f, t) = (pos[&br.from], pos[&br.to]);
        let ys = Complex64::new(br.r, br.x).inv();
        let tap = Complex64::from_polar(br.tap, br.phase_shift);
        let tap2 = br.tap * br.tap;
        let half_b = Complex64::new(0.0, br.b_charging / 2.0);

        series.add(f, f, ys / tap2);
        series.add(t, t, ys);
        series.add(f, t, -ys / tap.conj());
        series.add(t, f, -ys / tap);
        if br.b_charging != 0.0 {
            shunt.add(f, f, half_b / tap2);
            shunt.add(t, t, half_b);
        }
    }
    (series, shunt)
}
