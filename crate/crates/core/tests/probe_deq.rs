mod common;
use flowlhd::data::{gen_texture_images, Dataset};
use flowlhd::flow::arch::ArchDescriptor;
use flowlhd::flow::coupling::CouplingLayer;
use flowlhd::flow::dequant::DequantStage;
use flowlhd::flow::mask::Mask;
use flowlhd::flow::model::{Flow, FlowModel};
use flowlhd::train::{train, TrainConfig};
use flowlhd::RngStream;

fn build(variational: bool) -> FlowModel {
    let mut rng = RngStream::from_seed(4000);
    let desc = ArchDescriptor::image("dfld-simple", 3, 8, 8).unwrap();
    let dequant = if variational {
        DequantStage::variational(vec![
            CouplingLayer::new_conditional(3, 3, 8, Mask::checkerboard(0), &mut rng),
            CouplingLayer::new_conditional(3, 3, 8, Mask::checkerboard(1), &mut rng),
        ])
    } else {
        // burn the same rng draws so the coupling stack init matches
        let _ = CouplingLayer::new_conditional(3, 3, 8, Mask::checkerboard(0), &mut rng);
        let _ = CouplingLayer::new_conditional(3, 3, 8, Mask::checkerboard(1), &mut rng);
        DequantStage::uniform()
    };
    let transforms = vec![
        Flow::Coupling(CouplingLayer::new(3, 16, Mask::checkerboard(0), &mut rng)),
        Flow::Coupling(CouplingLayer::new(3, 16, Mask::checkerboard(1), &mut rng)),
        Flow::Coupling(CouplingLayer::new(3, 16, Mask::checkerboard(0), &mut rng)),
        Flow::Coupling(CouplingLayer::new(3, 16, Mask::checkerboard(1), &mut rng)),
    ];
    FlowModel::new(desc, Some(dequant), transforms)
}

#[test]
#[ignore]
fn probe_dequant_two_models() {
    let imgs = gen_texture_images(500, 8, 8, 2.0, &RngStream::from_seed(4001));
    let ids: Vec<String> = (0..500).map(|i| format!("img_{i:04}.png")).collect();
    let dataset = Dataset::from_images(ids, imgs.clone()).unwrap();
    let eval = imgs.select(&(0..32).collect::<Vec<_>>());
    for seed in [4002u64, 4010, 4020] {
        let mut var_model = build(true);
        let mut uni_model = build(false);
        for (name, m) in [("var", &mut var_model), ("uni", &mut uni_model)] {
            let cfg = TrainConfig { epochs: 20, batch_size: 50, seed, validation_fraction: 0.0, ..TrainConfig::default() };
            train(m, &dataset, &cfg, None).unwrap();
            let draws = 64u64;
            let mut v = 0.0;
            for draw in 0..draws {
                let mut r = RngStream::from_seed(5000).substream(draw);
                v += m.log_prob_images_rng(&eval, &mut r).unwrap().iter().sum::<f64>();
            }
            eprintln!("seed {seed} {name}: bound {:.3}", v / (draws * 32) as f64);
        }
    }
}
