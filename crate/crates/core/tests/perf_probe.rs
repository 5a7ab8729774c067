// quick perf probe
use flowlhd::numerics::matmul::matmul_acc;
use flowlhd::numerics::conv::ConvLayer;
use flowlhd::numerics::tensor::Tensor;
use flowlhd::numerics::rng::RngStream;
use std::time::Instant;

#[test]
fn perf_probe() {
    let (m, k, n) = (32usize, 576usize, 256usize);
    let a = vec![0.5f64; m * k];
    let b = vec![0.25f64; k * n];
    let mut out = vec![0.0f64; m * n];
    let t0 = Instant::now();
    let iters = 400;
    for _ in 0..iters {
        matmul_acc(&a, &b, m, k, n, &mut out);
    }
    let dt = t0.elapsed().as_secs_f64();
    let gflops = (2.0 * (m * k * n) as f64 * iters as f64) / dt / 1e9;
    eprintln!("matmul {m}x{k}x{n}: {gflops:.2} GFLOP/s");

    let mut rng = RngStream::from_seed(1);
    let layer = ConvLayer::new(32, 64, 3, &mut rng);
    let mut x = Tensor::zeros(&[16, 64, 16, 16]);
    rng.fill_normal(x.data_mut());
    let t0 = Instant::now();
    let iters = 20;
    for _ in 0..iters {
        let _ = layer.forward(&x).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64();
    let flops = 2.0 * (16 * 32 * 16 * 16) as f64 * (64 * 9) as f64 * iters as f64;
    eprintln!("conv fwd 64->32ch 16x16 batch16: {:.2} GFLOP/s", flops / dt / 1e9);

    let mut gw = Tensor::zeros(layer.weight.shape());
    let mut gb = Tensor::zeros(layer.bias.shape());
    let gy = Tensor::filled(&[16, 32, 16, 16], 0.1);
    let t0 = Instant::now();
    for _ in 0..iters {
        let _ = layer.backward(&x, &gy, &mut gw, &mut gb).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64();
    eprintln!("conv bwd: {:.2} GFLOP/s (2x fwd flops)", 2.0 * flops / dt / 1e9);
}
