use ising_rg_spde::solver::{project_initial, simulate_gradient, PathSim, SolverConfig, Trajectory};
use ising_rg_spde::{rng, ModelParams};
use rand::Rng;
use std::f64::consts::PI;

fn gap(mp: &ModelParams, n: usize, u0: &[f64], v0: &[f64], dt: f64, inc: &[Vec<f64>]) -> f64 {
    let cfg = SolverConfig::new(n, dt);
    let mut sim = PathSim::new(mp, &cfg, u0).unwrap();
    let mut fields = vec![sim.field()];
    for db in inc {
        sim.advance_with_increments(db).unwrap();
        fields.push(sim.field());
    }
    let traj = Trajectory { fields, increments: inc.to_vec(), seed: 0, dt };
    let grad = simulate_gradient(mp, &cfg, &traj, v0).unwrap();
    let tf = traj.terminal();
    let gf = grad.fields.last().unwrap();
    (0..n).map(|k| {
        let d = gf.cos_coeffs[k] - (k + 1) as f64 * PI * tf.sine_coeffs[k];
        d * d
    }).sum::<f64>().sqrt()
}

fn main() {
    for (n, fine_dt) in [(32usize, 2e-3), (32, 1e-3), (48, 2e-3), (40, 4e-3)] {
        let (delta, eps, k_c) = (0.3, 0.3, 0.0);
        let mp = ModelParams::new(k_c, 1.2, eps, delta, 0.005, 1.0, 0.5).unwrap();
        let u0 = project_initial(|x| 1.0 * (PI * x).sin(), n);
        let v0: Vec<f64> = u0.iter().enumerate().map(|(i, a)| (i + 1) as f64 * PI * a).collect();
        let fine_dt: f64 = fine_dt;
        let steps = (0.5 / fine_dt).round() as usize;
        let mut sf = 0.0; let mut sc = 0.0;
        for path in 0..16u64 {
            let mut r = rng::replica_rng(305, path);
            let fine: Vec<Vec<f64>> = (0..steps).map(|_| (0..n).map(|_| {
                let z: f64 = r.sample(rand_distr::StandardNormal);
                fine_dt.sqrt() * z
            }).collect()).collect();
            let coarse: Vec<Vec<f64>> = fine.chunks(2).map(|p| (0..n).map(|k| p[0][k] + p[1][k]).collect()).collect();
            sf += gap(&mp, n, &u0, &v0, fine_dt, &fine).powi(2);
            sc += gap(&mp, n, &u0, &v0, 2.0 * fine_dt, &coarse).powi(2);
        }
        println!("N={n} delta={delta} eps={eps} K={k_c}: rms_coarse={:.3e} rms_fine={:.3e} ratio={:.3}",
            (sc/16.0f64).sqrt(), (sf/16.0f64).sqrt(), (sc/sf).sqrt());
    }
}
