mod common;

use common::RESNET50_2D;
use gcanet::nn::{build_generator, count_conv_layers, count_parameters, Generator, Preset};

#[test]
fn encoder_matches_2d_resnet50_per_tensor() {
    let g: Generator<f32> = build_generator(Preset::Paper, [7, 7, 3], 0).unwrap();
    let encoder: Vec<_> = g
        .params
        .params()
        .iter()
        .filter_map(|(k, t)| k.strip_prefix("encoder.").map(|k| (k.to_string(), t.len())))
        .collect();
    assert_eq!(encoder.len(), RESNET50_2D.len());
    for (name, count) in RESNET50_2D {
        let ours = encoder
            .iter()
            .find(|(k, _)| k == name)
            .unwrap_or_else(|| panic!("missing encoder tensor {name}"));
        assert_eq!(ours.1, *count, "{name}");
    }
}

#[test]
fn encoder_total_is_within_tolerance_of_the_reported_count() {
    let g: Generator<f32> = build_generator(Preset::Paper, [7, 7, 3], 0).unwrap();
    let total = g.encoder_parameter_count();
    let table: usize = RESNET50_2D.iter().map(|(_, c)| c).sum();
    assert_eq!(total, table);
    let reported = 23_507_904.0;
    assert!((total as f64 - reported).abs() / reported <= 1e-4, "{total}");
    assert_eq!(g.params.param("encoder.conv1.weight").unwrap().len(), 9408);
}

#[test]
fn full_generator_counts_are_reported() {
    let g: Generator<f32> = build_generator(Preset::Paper, [7, 7, 3], 0).unwrap();
    let params = count_parameters(&g);
    let convs = count_conv_layers(&g);
    println!("paper-preset generator: {params} parameters, {convs} conv layers");
    assert_eq!(convs, 53 + 4 * 7 + 4 * 2 + 3 * 2 + 2 * 2 + 1);
    assert!(params > g.encoder_parameter_count());
}
