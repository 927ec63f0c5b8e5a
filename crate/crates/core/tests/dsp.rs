use proptest::prelude::*;
use wardsense_core::dsp::{
    decode_pcm, encode_pcm, hann_window, spectrogram, voxelize, window_count, window_stream, zscore, PcmAudio,
    PenPoint, PenState, PenStroke, SpectrogramParams,
};
use wardsense_core::oracle;
use wardsense_core::rng::Rng;

fn tone(rate: u32, freq: f64, len: usize, amp: f64) -> PcmAudio {
    let samples = (0..len)
        .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
        .collect();
    PcmAudio::new(rate, samples).unwrap()
}

#[test]
fn exact_bin_tone_peaks_in_every_frame() {
    let params = SpectrogramParams::default();
    let audio = tone(44100, 44100.0 * 32.0 / 1024.0, 44100, 0.5);
    let s = spectrogram(&audio, &params).unwrap();
    assert_eq!(s.frame_count, (44100 - 1024) / 512 + 1);
    for f in 0..s.frame_count {
        assert_eq!(s.argmax_bin(f), 32, "frame {f}");
    }
    // The naive DFT agrees on the peak of the first frame.
    let w = hann_window(1024);
    let frame: Vec<f64> = audio.samples()[..1024].iter().zip(&w).map(|(x, w)| x * w).collect();
    let dft = oracle::naive_dft(&frame);
    let mags: Vec<f64> = dft[..513].iter().map(|(re, im)| re.hypot(*im)).collect();
    assert_eq!(wardsense_core::nn::argmax(&mags), 32);
}

#[test]
fn spectrogram_magnitudes_match_naive_dft() {
    let mut rng = Rng::new(4);
    let samples: Vec<f64> = (0..600).map(|_| rng.uniform(-0.9, 0.9)).collect();
    let audio = PcmAudio::new(8000, samples.clone()).unwrap();
    let params = SpectrogramParams {
        fft_size: 256,
        hop: 100,
        floor_db: -200.0,
    };
    let s = spectrogram(&audio, &params).unwrap();
    let w = hann_window(256);
    for f in 0..s.frame_count {
        let frame: Vec<f64> = (0..256).map(|i| samples[f * 100 + i] * w[i]).collect();
        for (k, (re, im)) in oracle::naive_dft(&frame)[..129].iter().enumerate() {
            let db = 20.0 * (re.hypot(*im) + 1e-10).log10();
            assert!((s.frame(f)[k] - db).abs() < 1e-6, "frame {f} bin {k}");
        }
    }
}

#[test]
fn parseval_holds_per_frame() {
    let mut rng = Rng::new(8);
    let w = hann_window(1024);
    for _ in 0..5 {
        let x: Vec<f64> = (0..1024).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let frame: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
        let time_energy: f64 = frame.iter().map(|v| v * v).sum();
        let fast: f64 = wardsense_core::dsp::frame_spectrum(&frame)
            .unwrap()
            .iter()
            .map(|c| c.norm_sqr())
            .sum();
        let naive: f64 = oracle::naive_dft(&frame).iter().map(|(re, im)| re * re + im * im).sum();
        let want = 1024.0 * time_energy;
        assert!((fast - want).abs() <= 1e-6 * want);
        assert!((naive - want).abs() <= 1e-6 * want);
    }
}

#[test]
fn window_counts_match_closed_form() {
    let mut rng = Rng::new(12);
    for _ in 0..1000 {
        let n = rng.below(600);
        let rate = rng.uniform(10.0, 200.0);
        let overlap = rng.uniform(0.0, 0.95);
        let w = (rate * 1.0f64).round() as usize;
        let hop = ((w as f64 * (1.0 - overlap)).round() as usize).max(1);
        let expected = if n < w { 0 } else { (n - w) / hop + 1 };
        let samples = vec![[0.0, 0.0, 1.0]; n];
        let windows = window_stream(&samples, rate, 1.0, overlap, 0).unwrap();
        assert_eq!(windows.len(), expected);
        assert_eq!(window_count(n, rate, 1.0, overlap).unwrap(), expected);
        assert!(windows.iter().all(|x| x.len() == w));
    }
}

#[test]
fn diagonal_voxels_match_binning_oracle() {
    let points: Vec<PenPoint> = (0..100)
        .map(|i| {
            let u = i as f64 / 99.0;
            PenPoint {
                t_ms: i as f64 * 10.0,
                x: u,
                y: u,
                state: PenState::Contact,
            }
        })
        .collect();
    let stroke = PenStroke::new(points.clone()).unwrap();
    let grid = voxelize(&[stroke], [16, 16, 16]).unwrap();
    let raw: Vec<(f64, f64, f64, bool)> = points.iter().map(|p| (p.x, p.y, p.t_ms, false)).collect();
    assert_eq!(grid.occupied(), oracle::bin_points(&raw, (16, 16, 16)));
    assert_eq!(grid.data.iter().copied().fold(0.0, f64::max), 1.0);
}

fn arb_stroke() -> impl Strategy<Value = PenStroke> {
    proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 1.0f64..50.0, any::<bool>()), 1..80).prop_map(|raw| {
        let mut t = 0.0;
        let points = raw
            .into_iter()
            .map(|(x, y, dt, hover)| {
                t += dt;
                PenPoint {
                    t_ms: t,
                    x,
                    y,
                    state: if hover { PenState::Hover } else { PenState::Contact },
                }
            })
            .collect();
        PenStroke::new(points).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pcm_round_trip_is_exact(levels in proptest::collection::vec(-32768i32..=32767, 1..400)) {
        let samples: Vec<f64> = levels.iter().map(|&l| l as f64 / 32768.0).collect();
        let audio = PcmAudio::new(16000, samples).unwrap();
        let bytes = encode_pcm(&audio);
        prop_assert_eq!(bytes.len(), levels.len() * 2);
        prop_assert_eq!(decode_pcm(&bytes, 16000).unwrap(), audio);
    }

    #[test]
    fn voxel_grids_are_unit_bounded(strokes in proptest::collection::vec(arb_stroke(), 1..4), g in 2usize..10) {
        let grid = voxelize(&strokes, [g, g + 1, g]).unwrap();
        prop_assert!(grid.data.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(grid.data.iter().copied().fold(0.0, f64::max), 1.0);
        let t = grid.to_tensor();
        prop_assert_eq!(t.shape(), &[2, g, g + 1, g]);
    }

    #[test]
    fn zscore_moments(values in proptest::collection::vec(-1e3f64..1e3, 2..200)) {
        let z = zscore(&values).unwrap();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!(var.abs() < 1e-12 || (var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn spectrogram_is_pure(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let audio = PcmAudio::new(8000, (0..700).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let p = SpectrogramParams { fft_size: 128, hop: 64, floor_db: -80.0 };
        prop_assert_eq!(spectrogram(&audio, &p).unwrap(), spectrogram(&audio, &p).unwrap());
    }
}
