use imbaclass_core::sampling::rotate;
use imbaclass_core::synthgen::{generate_dataset, SynthConfig};

fn main() {
    for (size, noise) in [(32usize, 8.0f64), (32, 0.0), (16, 8.0)] {
        let data = generate_dataset(&SynthConfig {
            image_size: size,
            class_counts: vec![20, 20, 20],
            noise_std: noise,
            seed: 2,
        })
        .unwrap();
        let mut worst = 0.0f64;
        let mut mean_all = 0.0f64;
        let margin = size / 6 + 1;
        for i in 0..data.len() {
            let img = data.image(i);
            let back = rotate(&rotate(img, 10.0).unwrap(), -10.0).unwrap();
            let mut mad = 0.0f64;
            let mut n = 0.0;
            for y in margin..size - margin {
                for x in margin..size - margin {
                    mad += f64::from((back.get(x, y, 0) - img.get(x, y, 0)).abs());
                    n += 1.0;
                }
            }
            mad /= n;
            worst = worst.max(mad);
            mean_all += mad / data.len() as f64;
        }
        println!("size {size} noise {noise}: mean MAD {mean_all:.2}, worst {worst:.2}");
    }
}
