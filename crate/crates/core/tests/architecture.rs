use gse_core::nn::{GseResNeXt, Mode, ModelConfig};
use gse_core::Tensor;

#[test]
fn full_size_stage_shapes_and_parameter_count() {
    let cfg = ModelConfig::default();
    let mut model = GseResNeXt::<f32>::new(&cfg, 0).unwrap();
    let shapes = model.trace_shapes(&Tensor::zeros(&[1, 1, 256, 256])).unwrap();
    let got: Vec<(usize, usize)> = shapes.iter().map(|s| (s.channels, s.height)).collect();
    assert_eq!(
        got,
        [(64, 128), (64, 64), (256, 64), (512, 32), (1024, 16), (2048, 8), (2048, 1), (4, 1)]
    );
    let n = model.param_count();
    assert!((13_200_000..=16_200_000).contains(&n), "{n}");
    assert_eq!(model.first_layer_learnable(), 320);
    let plain = GseResNeXt::<f32>::new(&ModelConfig { use_gabor: false, ..cfg }, 0).unwrap();
    assert_eq!(plain.first_layer_learnable(), 3136);
    assert_eq!(n + 3136 - plain.param_count(), 320);
    println!("parameters: {n}");
}

#[test]
fn full_size_logits_and_latents() {
    let mut model = GseResNeXt::<f32>::new(&ModelConfig::default(), 1).unwrap();
    let x = Tensor::zeros(&[1, 1, 256, 256]);
    assert_eq!(model.forward(&x, Mode::Eval).unwrap().shape(), &[1, 4]);
    let z = model.extract_latent(&x).unwrap();
    assert_eq!(z.shape(), &[1, 2048]);
    assert!(z.all_finite());
}
