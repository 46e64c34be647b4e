use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};
use replayguard::audio::rms_dbfs;
use replayguard::{frame_signal, gate_silence, read_wav, write_wav, AudioBuffer, Error};

fn write_pcm16(path: &Path, channels: u16, samples: &[i16]) {
    let spec = WavSpec {
        channels,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn pcm16_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.wav");
    write_pcm16(&p, 1, &[0, 16384, -16384]);
    let buf = read_wav(&p).unwrap();
    assert_eq!(buf.sample_rate_hz(), 16_000);
    let want = [0.0, 0.5, -0.5];
    for (got, want) in buf.samples().iter().zip(want) {
        assert!((got - want).abs() <= 1.0 / 32768.0);
    }
}

#[test]
fn stereo_averages_to_mono() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.wav");
    let spec = WavSpec {
        channels: 2,
        sample_rate: 8000,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(&p, spec).unwrap();
    for _ in 0..4 {
        w.write_sample(1.0f32).unwrap();
        w.write_sample(0.0f32).unwrap();
    }
    w.finalize().unwrap();
    assert_eq!(read_wav(&p).unwrap().samples(), &[0.5; 4]);
}

#[test]
fn unsupported_and_broken_files() {
    let dir = tempfile::tempdir().unwrap();
    let p24 = dir.path().join("24.wav");
    let spec = WavSpec {
        channels: 1,
        sample_rate: 8000,
        bits_per_sample: 24,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(&p24, spec).unwrap();
    w.write_sample(1000i32).unwrap();
    w.finalize().unwrap();
    assert!(matches!(read_wav(&p24), Err(Error::UnsupportedEncoding(_))));

    let good = dir.path().join("good.wav");
    write_pcm16(&good, 1, &[1, 2, 3, 4]);
    let bytes = std::fs::read(&good).unwrap();
    let cut = dir.path().join("cut.wav");
    std::fs::write(&cut, &bytes[..20]).unwrap();
    assert!(matches!(read_wav(&cut), Err(Error::MalformedHeader(_))));

    let missing = dir.path().join("missing.wav");
    match read_wav(&missing) {
        Err(e @ Error::NotFound(_)) => assert!(e.to_string().contains("missing.wav")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn pcm16_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.wav");
    let samples: Vec<f64> = (-100..100).map(|i| i as f64 * 97.0 / 32768.0).collect();
    write_wav(&p, &AudioBuffer::new(samples.clone(), 22_050).unwrap()).unwrap();
    let back = read_wav(&p).unwrap();
    assert_eq!(back.samples(), &samples[..]);
    assert_eq!(back.sample_rate_hz(), 22_050);
}

#[test]
fn framing_examples() {
    let buf = AudioBuffer::new(vec![0.1; 2048], 8000).unwrap();
    let f = frame_signal(&buf, 1024, 0.5).unwrap();
    assert_eq!(f.len(), 3);
    assert_eq!((f.start(0), f.start(1), f.start(2)), (0, 512, 1024));
    let one = AudioBuffer::new(vec![0.1; 1024], 8000).unwrap();
    assert_eq!(frame_signal(&one, 1024, 0.5).unwrap().len(), 1);
    let short = AudioBuffer::new(vec![0.1; 1000], 8000).unwrap();
    assert!(matches!(
        frame_signal(&short, 1024, 0.5),
        Err(Error::InputTooShort { .. })
    ));
}

#[test]
fn gate_examples() {
    let n = 1024;
    let mut x = vec![0.0; n];
    x.extend((0..n).map(|t| (2.0 * std::f64::consts::PI * t as f64 / 64.0).sin()));
    x.extend(vec![0.001; n]);
    let buf = AudioBuffer::new(x, 8000).unwrap();
    let frames = frame_signal(&buf, n, 0.0).unwrap();
    let act = gate_silence(&frames, -40.0);
    assert_eq!(act.active, vec![false, true, false]);
    assert_eq!(act.energy_db[0], -120.0);
    assert!((act.energy_db[2] - -60.0).abs() < 1e-9);
    assert!((rms_dbfs(&frames.frames()[1]) - -3.0103).abs() < 1e-3);
}
