//! Plain synchronous loop: every node updates `z`, then `x` and `y`, every round,
//! with fresh gradients. Written independently of [`crate::engine`] so the two can be
//! compared trajectory for trajectory.

use crate::problem::Problem;

#[derive(Debug, Clone)]
pub struct SynchronousAdmm<'a, P: ?Sized> {
    problem: &'a P,
    rho: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

impl<'a, P: Problem + ?Sized> SynchronousAdmm<'a, P> {
    pub fn new(problem: &'a P, rho: Vec<f64>, z0: Vec<Vec<f64>>) -> Self {
        let topo = problem.topology();
        let x: Vec<Vec<f64>> = (0..topo.num_nodes())
            .map(|k| {
                topo.neighborhood(k)
                    .iter()
                    .flat_map(|&j| z0[j].clone())
                    .collect()
            })
            .collect();
        let y = x.iter().map(|v| vec![0.0; v.len()]).collect();
        Self {
            problem,
            rho,
            x,
            y,
            z: z0,
        }
    }

    pub fn step(&mut self) {
        let topo = self.problem.topology();
        let n = topo.num_nodes();
        let d = self.problem.block_dim();

        let mut z_next = Vec::with_capacity(n);
        for j in 0..n {
            let mut acc = vec![0.0; d];
            let mut den = 0.0;
            for &k in topo.neighborhood(j) {
                let s = topo.slot(k, j).unwrap();
                let (x, y) = (
                    &self.x[k][s * d..(s + 1) * d],
                    &self.y[k][s * d..(s + 1) * d],
                );
                for ((a, x), y) in acc.iter_mut().zip(x).zip(y) {
                    *a += self.rho[k] * x + y;
                }
                den += self.rho[k];
            }
            for a in acc.iter_mut() {
                *a /= den;
            }
            let mut z = vec![0.0; d];
            self.problem.prox(j, &acc, den, &mut z);
            z_next.push(z);
        }
        self.z = z_next;

        for k in 0..n {
            let zk: Vec<f64> = topo
                .neighborhood(k)
                .iter()
                .flat_map(|&j| self.z[j].iter().copied())
                .collect();
            let mut g = vec![0.0; zk.len()];
            self.problem.grad_g(k, &zk, &mut g);
            for i in 0..zk.len() {
                self.x[k][i] = zk[i] - (g[i] + self.y[k][i]) / self.rho[k];
                self.y[k][i] += self.rho[k] * (self.x[k][i] - zk[i]);
            }
        }
    }
}
