use wardsense_core::dsp::{accel_magnitude, spectrogram, spectrogram_of, zscore, AccelWindow, SpectrogramParams};
use wardsense_core::simulator::{
    path_length, synth_accel, synth_audio, synth_strokes, walking_with_falls, TraceKind, TraceSpec,
};

/// Sum of point-to-point distances, written out independently of the
/// library helper.
fn polyline_length(points: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for i in 1..points.len() {
        let dx = points[i].0 - points[i - 1].0;
        let dy = points[i].1 - points[i - 1].1;
        total += (dx * dx + dy * dy).sqrt();
    }
    total
}

#[test]
fn walking_cadence_shows_in_the_spectrogram() {
    for seed in [1, 2, 3] {
        let trace = synth_accel(&TraceSpec::new(TraceKind::Walking, 20.0, 50.0, seed)).unwrap();
        let window = AccelWindow::new(50.0, trace.samples, 0).unwrap();
        // Gravity would otherwise dominate bin 0.
        let centred = zscore(&accel_magnitude(&window)).unwrap();
        let params = SpectrogramParams {
            fft_size: 256,
            hop: 128,
            floor_db: -80.0,
        };
        let s = spectrogram_of(&centred, 50.0, &params).unwrap();
        for f in 0..s.frame_count {
            let freq = s.bin_frequency(s.argmax_bin(f));
            assert!((freq - 2.0).abs() <= 0.5, "seed {seed} frame {f}: {freq} Hz");
        }
    }
}

#[test]
fn high_tones_peak_above_low_tones() {
    let params = SpectrogramParams::default();
    for seed in 0..5 {
        let dominant = |kind| {
            let audio = synth_audio(&TraceSpec::new(kind, 1.0, 44100.0, seed)).unwrap();
            let s = spectrogram(&audio, &params).unwrap();
            let mut mean = vec![0.0; s.bin_count];
            for f in 0..s.frame_count {
                for (m, v) in mean.iter_mut().zip(s.frame(f)) {
                    *m += v;
                }
            }
            wardsense_core::nn::argmax(&mean)
        };
        assert!(dominant(TraceKind::ToneHigh) > dominant(TraceKind::ToneLow));
    }
}

#[test]
fn spirals_have_increasing_timestamps_and_tremor_is_longer() {
    for seed in 0..10 {
        let smooth = synth_strokes(&TraceSpec::new(TraceKind::SpiralSmooth, 4.0, 100.0, seed)).unwrap();
        let tremor = synth_strokes(&TraceSpec::new(TraceKind::SpiralTremor, 4.0, 100.0, seed)).unwrap();
        for strokes in [&smooth, &tremor] {
            for s in strokes.iter() {
                assert!(s.points().windows(2).all(|w| w[1].t_ms > w[0].t_ms));
            }
        }
        let xy = |strokes: &[wardsense_core::dsp::PenStroke]| -> Vec<(f64, f64)> {
            strokes.iter().flat_map(|s| s.points().iter().map(|p| (p.x, p.y))).collect()
        };
        let (ls, lt) = (polyline_length(&xy(&smooth)), polyline_length(&xy(&tremor)));
        assert!(lt > ls, "seed {seed}: tremor {lt} vs smooth {ls}");
        assert!((path_length(&smooth) - ls).abs() < 1e-12);
        let hover = |strokes: &[wardsense_core::dsp::PenStroke]| {
            strokes[0].points().iter().filter(|p| p.state.channel() == 1).count()
        };
        assert!(hover(&tremor) > hover(&smooth));
    }
}

#[test]
fn traces_are_reproducible_bit_for_bit() {
    for kind in TraceKind::ALL {
        let spec = TraceSpec::new(kind, 2.0, kind.default_rate(), 42);
        match kind.modality() {
            wardsense_core::simulator::Modality::Accel => {
                assert_eq!(synth_accel(&spec).unwrap(), synth_accel(&spec).unwrap())
            }
            wardsense_core::simulator::Modality::Audio => {
                assert_eq!(synth_audio(&spec).unwrap(), synth_audio(&spec).unwrap())
            }
            wardsense_core::simulator::Modality::Pen => {
                assert_eq!(synth_strokes(&spec).unwrap(), synth_strokes(&spec).unwrap())
            }
        }
    }
}

#[test]
fn packet_slicing_yields_whole_seconds() {
    for secs in [1usize, 5, 10, 60] {
        let t = walking_with_falls(secs, 50.0, &[], 1).unwrap();
        assert_eq!(t.packets(1.0).len(), secs);
    }
    let t = synth_accel(&TraceSpec::new(TraceKind::Idle, 7.9, 50.0, 1)).unwrap();
    assert_eq!(t.packets(1.0).len(), 7);
}
