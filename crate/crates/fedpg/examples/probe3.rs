use fedpg::config::{parse_config, EXAMPLE_CONFIG};
use fedpg::env::generate_heterogeneous_scenario;
use fedpg::rng::substream;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let text = if args.len() > 1 {
        std::fs::read_to_string(&args[1]).unwrap()
    } else {
        EXAMPLE_CONFIG.to_string()
    };
    let cfg = parse_config(&text, &[]).unwrap();
    let template = cfg.template();
    for seed in [11u64, 12, 13, 14, 15] {
        let mut rng = substream(seed, "scenario", &[]);
        let sc = generate_heterogeneous_scenario(&template, &mut rng).unwrap();
        print!("seed {seed}:");
        for (n, h) in sc.hotspots.iter().enumerate() {
            let (mut cx, mut cy) = (0.0, 0.0);
            for &(x, y) in &h.user_positions {
                cx += x;
                cy += y;
            }
            let k = h.user_positions.len() as f64;
            cx /= k;
            cy /= k;
            let d = (cx * cx + cy * cy).sqrt();
            print!("  n{n} center=({cx:.0},{cy:.0}) |d|={d:.0} act={:.2}", h.activation_probs[0]);
        }
        println!();
    }
}
