use enscore::data::gen_multimodal;
use enscore::model::ModelConfig;
use enscore::trainer::{train, TrainConfig};
use enscore::compute::Activation;
use std::time::Instant;

fn main() {
    let data = gen_multimodal(1000, 0).unwrap();
    let tcfg = TrainConfig::new(10, 150, 50).with_seed(2);
    for act in [Activation::Relu, Activation::Tanh] {
        let mcfg = ModelConfig::new(1, 1, 1).with_seed(1).with_activation(act);
        let t = Instant::now();
        let (_, h) = train(&data, &mcfg, &tcfg).unwrap();
        let el = t.elapsed().as_secs_f64();
        println!("{:5} : {:.1} ms/step -> 300 epochs ≈ {:.0}s", act.name(), el / h.steps as f64 * 1e3, el * 30.0);
    }
}
