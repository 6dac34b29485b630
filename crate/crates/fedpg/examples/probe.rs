use fedpg::channel::*;
use fedpg::env::*;
use fedpg::geometry::*;
use fedpg::rng::substream;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

fn main() {
    // mirror the desk-scale template
    let params = RicianParams::from_db(15.0, 10.0, 11.7e9).unwrap();
    let budget = LinkBudget::new(-16.82, -174.0, 2e7, 11.7e9).unwrap();
    let m = 8usize;
    let c = 8usize;
    let d_lr = 551_000.0;
    let d_ru = 120.0;
    let mut rng = substream(7, "probe", &[0]);
    let draws = 20_000;
    let (mut rnd, mut uni, mut opt) = (0.0, 0.0, 0.0);
    for _ in 0..draws {
        let lr = lr_channel(&params, d_lr, m, &mut rng).unwrap();
        let ru = ru_channel_plain(&params, d_ru, m, &mut rng).unwrap();
        // random phases
        let idx: Vec<usize> = (0..m).map(|_| rng.gen_range(1..=c)).collect();
        let pr = phase_vector(&PhaseControl::new(c, idx).unwrap());
        rnd += rate(equivalent_channel(&lr, &pr, &ru).unwrap(), &budget);
        // uniform (all index 1)
        let pu = phase_vector(&PhaseControl::new(c, vec![1; m]).unwrap());
        uni += rate(equivalent_channel(&lr, &pu, &ru).unwrap(), &budget);
        // per-element best discrete alignment (genie)
        let po: Vec<Complex64> = (0..m)
            .map(|i| {
                let target = -(lr[i] * ru[i]).arg();
                let step = std::f64::consts::TAU / c as f64;
                let k = (target / step).round();
                Complex64::from_polar(1.0, k * step)
            })
            .collect();
        opt += rate(equivalent_channel(&lr, &po, &ru).unwrap(), &budget);
    }
    let n = draws as f64;
    println!("random={:.6e} uniform={:.6e} genie={:.6e} (rate units)", rnd/n, uni/n, opt/n);
    println!("uniform/random = {:.2}, genie/random = {:.2}", uni/rnd, opt/rnd);
    let _ = (DVector::<f64>::zeros(1), distance(Vec3::new(0.,0.,0.), Vec3::new(1.,0.,0.)), reward_from_rates(&[1.0],&[true]));
}
