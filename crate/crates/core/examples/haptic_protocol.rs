//! Map pitches onto the actuator strip, put the commands on the wire and
//! play them into the device simulator.
//!
//!     cargo run --example haptic_protocol

use pitchcoach::haptics::{
    decode_haptic_frame, encode_haptic_frame, map_pitch_to_actuator, ActuatorLayout, DeviceSimulator,
    FrameDecoder, HapticFrame,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let layout = ActuatorLayout::default();
    let mut wire = Vec::new();
    for (i, midi) in [48.0, 55.0, 60.0, 64.5, 72.0].into_iter().enumerate() {
        let frame = HapticFrame {
            t_ms: i as f64 * 100.0,
            actuator: map_pitch_to_actuator(midi, &layout),
            intensity: 0.8,
            duration_ms: 250,
        };
        let bytes = encode_haptic_frame(&frame)?;
        println!("midi {midi:>5} -> actuator {:>2}  bytes {:02X?}", frame.actuator, bytes);
        wire.extend_from_slice(&bytes);
    }

    let mut corrupt = encode_haptic_frame(&HapticFrame {
        t_ms: 0.0,
        actuator: 3,
        intensity: 0.5,
        duration_ms: 100,
    })?;
    corrupt[2] ^= 0x10;
    println!("flipped bit: {}", decode_haptic_frame(&corrupt).unwrap_err());

    // a stream with leading garbage; the decoder resynchronises on the start byte
    let mut stream = vec![0x00, 0x13, 0x37];
    stream.extend_from_slice(&wire);
    let mut decoder = FrameDecoder::new();
    let mut sim = DeviceSimulator::new(&layout);
    for (i, result) in decoder.push(&stream).into_iter().enumerate() {
        match result {
            Ok(frame) => {
                let now = i as u64 * 100;
                sim.apply(now, &frame)?;
                print!("{}", sim.dump(now));
            }
            Err(e) => println!("skipped: {e}"),
        }
    }
    Ok(())
}
