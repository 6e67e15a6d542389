use rislink_core::ldpc::LdpcCode;
use rislink_core::config::seeded_rng;
use rand::Rng;

fn ber_at(code: &LdpcCode, ebn0_db: f64, iters: usize, codewords: usize, seed: u64) -> (f64, u64) {
    let mut rng = seeded_rng(seed, 9);
    let r = 0.5;
    let sigma2 = 1.0 / (2.0 * r * 10f64.powf(ebn0_db / 10.0));
    let mut bit_errs = 0u64; let mut bits = 0u64;
    for _ in 0..codewords {
        let msg: Vec<u8> = (0..code.message_length()).map(|_| rng.random_range(0..2u8)).collect();
        let cw = code.encode(&msg).unwrap();
        let llr: Vec<f64> = cw.iter().map(|&b| {
            let s = 2.0 * b as f64 - 1.0;
            let y = s + sigma2.sqrt() * rng.sample::<f64,_>(rand_distr::StandardNormal);
            2.0 * y / sigma2
        }).collect();
        let res = code.decode(&llr, iters);
        for (pos, &bit) in code.info_positions().iter().zip(&msg) {
            if res.hard_bits[*pos] != bit { bit_errs += 1; }
        }
        bits += code.message_length() as u64;
    }
    (bit_errs as f64 / bits as f64, bit_errs)
}

fn main() {
    for seed in 0..12u64 {
        let code = LdpcCode::build(512, 0.5, 3, seed).unwrap();
        let (ber, errs) = ber_at(&code, 3.0, 10, 8000, 42);
        println!("seed {seed:2}: BER {ber:.3e} ({errs} errs over 2.05e6 bits)");
    }
}
