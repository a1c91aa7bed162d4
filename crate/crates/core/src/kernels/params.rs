use super::tensor::Matrix;

/// Uniform access to the arrays of a parameter set, in a fixed order.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&Matrix));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Matrix));

    fn num_arrays(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    fn num_elements(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |m| n += m.data().len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_elements());
        self.visit(&mut |m| out.extend_from_slice(m.data()));
        out
    }

    /// Overwrites every element from `values` in visit order; `values` must
    /// hold exactly [`Parameters::num_elements`] entries.
    fn assign(&mut self, values: &[f64]) {
        let mut at = 0;
        self.visit_mut(&mut |m| {
            let n = m.data().len();
            m.data_mut().copy_from_slice(&values[at..at + n]);
            at += n;
        });
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |m| m.data_mut().fill(value));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |m| ok &= m.is_finite());
        ok
    }
}
