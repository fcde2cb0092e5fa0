use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfpa_core::channel::{ChannelRealization, Party};
use rfpa_core::codec::{Codec, Scheme};
use rfpa_core::keyschedule::{adversary_guess_schedule, generate_schedule, SecretKey};
use rfpa_core::params::{validate, SystemConfig};
use rfpa_core::receiver::{ReceiverOptions, SparseReceiver};
use rfpa_core::waveform::{synthesize, BasebandFrame};

#[test]
fn raw_file_round_trip_then_noiseless_decode() {
    let cfg = validate(SystemConfig {
        num_pulses: 5,
        ..SystemConfig::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let key = SecretKey::random(&mut rng);
    let schedule = generate_schedule(&key, &cfg, 0);
    for scheme in Scheme::ALL {
        let codec = Codec::for_config(&cfg, scheme).unwrap();
        let bits: Vec<bool> = (0..cfg.num_pulses() * codec.bits_per_pulse()).map(|_| rng.random()).collect();
        let plans = codec.encode_frame(&bits, cfg.num_pulses()).unwrap();
        let frame = synthesize(&plans, &schedule, &cfg).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.iq");
        frame.write_raw(std::fs::File::create(&path).unwrap()).unwrap();
        let back = BasebandFrame::read_raw(std::fs::File::open(&path).unwrap()).unwrap();
        assert_eq!(back, frame);

        let channel = ChannelRealization::draw(&cfg, 0.0, 0.0, &mut rng);
        let rx = channel.apply(&back, Party::Bob, &cfg, &mut rng).unwrap();
        let receiver = SparseReceiver::new(&cfg, scheme, ReceiverOptions::default());
        let (decoded, flagged) = receiver.receive_frame(&rx, channel.matrices(Party::Bob), &schedule, &codec);
        assert_eq!(flagged, 0, "{scheme}");
        assert_eq!(decoded, bits, "{scheme}");

        // Without the key the same noiseless frame decodes to roughly coin flips.
        let guess = adversary_guess_schedule(3, &cfg);
        let eve_rx = channel.apply(&back, Party::Eve, &cfg, &mut rng).unwrap();
        let (eve_bits, _) = receiver.receive_frame(&eve_rx, channel.matrices(Party::Eve), &guess, &codec);
        let errors = eve_bits.iter().zip(&bits).filter(|(a, b)| a != b).count();
        let ber = errors as f64 / bits.len() as f64;
        assert!(ber > 0.3, "{scheme}: eve BER {ber}");
    }
}
