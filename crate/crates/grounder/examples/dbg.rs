// quick diagnostic for checkpoint roundtrip
use grounder::config::RunConfig;
use grounder::exec::ExecMode;
use grounder::model::{build_vocab, Model};
use grounder::synth::{generate, GeneratorConfig};
use grounder::train::{fit, Checkpoint};

fn main() {
    let gen = GeneratorConfig { n_samples: 5, clips: 10, d_v: 8, n_events: 3, paraphrase_prob: 0.0, seed: 4, ..GeneratorConfig::default() };
    let data = generate(&gen).unwrap().samples;
    let mut cfg = RunConfig::default();
    cfg.model.d_v = 8; cfg.model.d_l = 8; cfg.model.d_m = 8; cfg.model.d_w = 6; cfg.model.t_m = 8;
    cfg.model.blocks = 1; cfg.model.heads = 2; cfg.sampler.k_train = 3;
    cfg.train.batch_size = 4; cfg.train.epochs = 1; cfg.train.seed = 11;
    let vocab = build_vocab(&data);
    let mut model = Model::init(cfg.model.clone(), vocab, cfg.train.seed).unwrap();
    let (_, adam) = fit(&mut model, &data, &cfg, ExecMode::Sequential).unwrap();
    let ck = Checkpoint::new(&model, &cfg, &adam);
    let text = serde_json::to_string(&ck).unwrap();
    let back: Checkpoint = serde_json::from_str(&text).unwrap();
    for (k, v) in &ck.params {
        let w = back.params.get(k).unwrap();
        if v != w {
            println!("param {k} differs");
            for i in 0..v.len() {
                if v.data()[i] != w.data()[i] {
                    println!("  [{i}] {:?} vs {:?} (bits {:x} vs {:x})", v.data()[i], w.data()[i], v.data()[i].to_bits(), w.data()[i].to_bits());
                    break;
                }
            }
            break;
        }
    }
    for (k, v) in &ck.bn {
        let w = back.bn.get(k).unwrap();
        if v != w { println!("bn {k} differs"); break; }
    }
    println!("done");
}
