use std::time::Instant;
use mapseg_core::unet::{forward, backward, init_params, NetConfig};
use mapseg_core::unet::layers::{conv_forward, conv_backward};
use mapseg_core::unet::ConvKernel;
use mapseg_core::Tensor;

fn t(label: &str, f: impl FnOnce()) {
    let t0 = Instant::now();
    f();
    println!("{label}: {:?}", t0.elapsed());
}

#[test]
#[ignore]
fn profile_layers() {
    let cfg = NetConfig::pass1();
    let params = init_params(&cfg, 0).unwrap();
    let x = Tensor::from_data(3, 128, 128, (0..3*128*128).map(|i| (i % 255) as f64 / 255.0).collect());
    // warm
    let (y, cache) = forward(&params, &cfg, &x).unwrap();
    let dy = Tensor::from_data(1, 128, 128, vec![0.001; 128*128]);
    t("forward x4", || { for _ in 0..4 { let _ = forward(&params, &cfg, &x).unwrap(); } });
    t("backward x4", || { for _ in 0..4 { let _ = backward(&params, &cfg, &cache, &dy).unwrap(); } });
    let _ = y;

    // isolate one expensive conv: 32->16 at 128x128
    let k = {
        let mut k = ConvKernel::zeros(16, 32, 3);
        for (i, w) in k.weights.iter_mut().enumerate() { *w = (i % 13) as f64 * 0.01; }
        k
    };
    let xin = Tensor::from_data(32, 128, 128, (0..32*128*128).map(|i| (i % 97) as f64 * 0.01).collect());
    let dyc = Tensor::from_data(16, 128, 128, vec![0.001; 16*128*128]);
    t("conv 32->16@128 fwd x8", || { for _ in 0..8 { let _ = conv_forward(&k, &xin); } });
    t("conv 32->16@128 bwd x8", || { for _ in 0..8 { let _ = conv_backward(&k, &xin, &dyc); } });
    // deep conv 256->256 @ 8x8
    let k2 = ConvKernel::zeros(256, 256, 3);
    let x2 = Tensor::from_data(256, 8, 8, vec![0.5; 256*64]);
    let dy2 = Tensor::from_data(256, 8, 8, vec![0.001; 256*64]);
    t("conv 256->256@8 fwd x8", || { for _ in 0..8 { let _ = conv_forward(&k2, &x2); } });
    t("conv 256->256@8 bwd x8", || { for _ in 0..8 { let _ = conv_backward(&k2, &x2, &dy2); } });
    // mid conv 128->128 @ 16
    let k3 = ConvKernel::zeros(128, 128, 3);
    let x3 = Tensor::from_data(128, 16, 16, vec![0.5; 128*256]);
    let dy3 = Tensor::from_data(128, 16, 16, vec![0.001; 128*256]);
    t("conv 128->128@16 fwd x8", || { for _ in 0..8 { let _ = conv_forward(&k3, &x3); } });
    t("conv 128->128@16 bwd x8", || { for _ in 0..8 { let _ = conv_backward(&k3, &x3, &dy3); } });
    // wide-spatial conv 16->16 @128
    let k4 = ConvKernel::zeros(16, 16, 3);
    let x4 = Tensor::from_data(16, 128, 128, vec![0.5; 16*16384]);
    let dy4 = Tensor::from_data(16, 128, 128, vec![0.001; 16*16384]);
    t("conv 16->16@128 fwd x8", || { for _ in 0..8 { let _ = conv_forward(&k4, &x4); } });
    t("conv 16->16@128 bwd x8", || { for _ in 0..8 { let _ = conv_backward(&k4, &x4, &dy4); } });
}
