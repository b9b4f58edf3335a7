//! Buoy broadcast sentence and TDMA frame schedule.
//!
//! Each buoy sends one NMEA-style ASCII sentence per frame:
//!
//! ```text
//! $UWPS,<id>,<seconds of day>.<ms>,<lat>,<lon>,<height>*HH\r\n
//! ```
//!
//! Latitude and longitude carry seven decimals, height two, time three.
//! `HH` is the XOR of every byte between `$` and `*`, as two uppercase hex
//! digits. Fields are stored as the integers that appear on the wire, so a
//! decoded message re-encodes to the identical bytes.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geo::GeodeticCoord;
use crate::time::ClockTime;

pub const TALKER: &str = "UWPS";
/// Upper bound on the sentence length set by the link budget.
pub const MAX_SENTENCE_BYTES: usize = 80;
/// Longest transmission a slot may take when the cap is enabled, seconds.
pub const MAX_MESSAGE_DURATION: f64 = 1.0;
pub const MILLIS_PER_DAY: u32 = 86_400_000;
/// Largest height magnitude that fits the field, centimetres.
pub const MAX_HEIGHT_CM: i32 = 9_999_999;

const LAT_LIMIT_E7: i32 = 900_000_000;
const LON_LIMIT_E7: i32 = 1_800_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("FieldOverflow: {field} value {value} does not fit its field")]
    FieldOverflow { field: &'static str, value: String },
    #[error("ChecksumMismatch: sentence says {stated:02X}, payload gives {computed:02X}")]
    ChecksumMismatch { stated: u8, computed: u8 },
    #[error("MalformedSentence: {0}")]
    MalformedSentence(String),
    #[error("FieldRange: {field} value {value} is out of range")]
    FieldRange { field: &'static str, value: String },
    #[error("BudgetExceeded: message takes {duration} s, limit is {limit} s")]
    BudgetExceeded { duration: f64, limit: f64 },
    #[error("InvalidSchedule: {0}")]
    InvalidSchedule(String),
}

impl ProtocolError {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolError::FieldOverflow { .. } => "FieldOverflow",
            ProtocolError::ChecksumMismatch { .. } => "ChecksumMismatch",
            ProtocolError::MalformedSentence(_) => "MalformedSentence",
            ProtocolError::FieldRange { .. } => "FieldRange",
            ProtocolError::BudgetExceeded { .. } => "BudgetExceeded",
            ProtocolError::InvalidSchedule(_) => "InvalidSchedule",
        }
    }
}

/// One buoy broadcast in wire units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BuoyMessage {
    /// 1..=4 on the wire.
    pub buoy_id: u8,
    /// GNSS time of the position fix, milliseconds since midnight.
    pub gnss_time_ms: u32,
    /// Degrees times 10^7.
    pub latitude_e7: i32,
    /// Degrees times 10^7.
    pub longitude_e7: i32,
    /// Centimetres above the ellipsoid.
    pub height_cm: i32,
}

fn overflow(field: &'static str, value: impl ToString) -> ProtocolError {
    ProtocolError::FieldOverflow { field, value: value.to_string() }
}

fn out_of_range(field: &'static str, value: impl ToString) -> ProtocolError {
    ProtocolError::FieldRange { field, value: value.to_string() }
}

fn round_to_i32(field: &'static str, value: f64) -> Result<i32, ProtocolError> {
    let r = value.round();
    if r.is_finite() && r >= i32::MIN as f64 && r <= i32::MAX as f64 {
        Ok(r as i32)
    } else {
        Err(overflow(field, value))
    }
}

impl BuoyMessage {
    /// Rounds a position fix to wire resolution. `gnss_time` is the time of
    /// day; it is rounded to the nearest millisecond.
    pub fn quantize(buoy_id: u8, gnss_time: ClockTime, position: &GeodeticCoord) -> Result<Self, ProtocolError> {
        let millis = (gnss_time.picos() as f64 / 1e9).round();
        if !(0.0..MILLIS_PER_DAY as f64).contains(&millis) {
            return Err(overflow("gnss_time", gnss_time));
        }
        let mut longitude_e7 = round_to_i32("longitude", position.longitude() * 1e7)?;
        if longitude_e7 == -LON_LIMIT_E7 {
            longitude_e7 = LON_LIMIT_E7;
        }
        let m = BuoyMessage {
            buoy_id,
            gnss_time_ms: millis as u32,
            latitude_e7: round_to_i32("latitude", position.latitude() * 1e7)?,
            longitude_e7,
            height_cm: round_to_i32("height", position.height() * 100.0)?,
        };
        m.check().map_err(|e| match e {
            ProtocolError::FieldRange { field, value } => ProtocolError::FieldOverflow { field, value },
            other => other,
        })?;
        Ok(m)
    }

    pub fn gnss_time(&self) -> ClockTime {
        ClockTime::from_millis(self.gnss_time_ms as i64)
    }

    pub fn position(&self) -> Result<GeodeticCoord, ProtocolError> {
        self.check()?;
        GeodeticCoord::new(self.latitude_e7 as f64 / 1e7, self.longitude_e7 as f64 / 1e7, self.height_cm as f64 / 100.0)
            .map_err(|e| out_of_range("position", e))
    }

    fn check(&self) -> Result<(), ProtocolError> {
        if !(1..=4).contains(&self.buoy_id) {
            return Err(out_of_range("buoy_id", self.buoy_id));
        }
        if self.gnss_time_ms >= MILLIS_PER_DAY {
            return Err(out_of_range("gnss_time", self.gnss_time_ms));
        }
        if !(-LAT_LIMIT_E7..=LAT_LIMIT_E7).contains(&self.latitude_e7) {
            return Err(out_of_range("latitude", self.latitude_e7));
        }
        if !(-LON_LIMIT_E7 < self.longitude_e7 && self.longitude_e7 <= LON_LIMIT_E7) {
            return Err(out_of_range("longitude", self.longitude_e7));
        }
        if self.height_cm.unsigned_abs() > MAX_HEIGHT_CM as u32 {
            return Err(out_of_range("height", self.height_cm));
        }
        Ok(())
    }
}

/// XOR of all bytes, the NMEA checksum of a payload.
pub fn checksum(payload: &[u8]) -> u8 {
    payload.iter().fold(0, |acc, b| acc ^ b)
}

fn push_fixed(out: &mut String, value: i64, decimals: u32) {
    let scale = 10u64.pow(decimals);
    let abs = value.unsigned_abs();
    if value < 0 {
        out.push('-');
    }
    write!(out, "{}.{:0width$}", abs / scale, abs % scale, width = decimals as usize).unwrap();
}

pub fn encode_message(m: &BuoyMessage) -> Result<Vec<u8>, ProtocolError> {
    m.check().map_err(|e| match e {
        ProtocolError::FieldRange { field, value } => ProtocolError::FieldOverflow { field, value },
        other => other,
    })?;
    let mut payload = format!("{TALKER},{},", m.buoy_id);
    push_fixed(&mut payload, m.gnss_time_ms as i64, 3);
    payload.push(',');
    push_fixed(&mut payload, m.latitude_e7 as i64, 7);
    payload.push(',');
    push_fixed(&mut payload, m.longitude_e7 as i64, 7);
    payload.push(',');
    push_fixed(&mut payload, m.height_cm as i64, 2);
    let sentence = format!("${payload}*{:02X}\r\n", checksum(payload.as_bytes()));
    debug_assert!(sentence.len() <= MAX_SENTENCE_BYTES);
    Ok(sentence.into_bytes())
}

fn malformed(why: impl Into<String>) -> ProtocolError {
    ProtocolError::MalformedSentence(why.into())
}

fn hex_digit(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

/// Parses a canonical fixed-point decimal: optional `-`, an integer part
/// without leading zeros, and exactly `decimals` fraction digits. Negative
/// zero is rejected so that every value has one spelling.
fn parse_fixed(field: &'static str, text: &str, decimals: usize, int_digits: usize) -> Result<i64, ProtocolError> {
    let bad = || malformed(format!("{field} field {text:?} is not a {decimals}-decimal number"));
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = body.split_once('.').ok_or_else(bad)?;
    let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    if !digits(int_part) || !digits(frac_part) || frac_part.len() != decimals {
        return Err(bad());
    }
    if int_part.len() > 1 && int_part.starts_with('0') {
        return Err(bad());
    }
    if int_part.len() > int_digits {
        return Err(out_of_range(field, text));
    }
    let value = int_part.parse::<i64>().map_err(|_| bad())? * 10i64.pow(decimals as u32)
        + frac_part.parse::<i64>().map_err(|_| bad())?;
    if negative && value == 0 {
        return Err(bad());
    }
    Ok(if negative { -value } else { value })
}

/// Total over arbitrary bytes: every input yields a message or an error.
pub fn decode_message(bytes: &[u8]) -> Result<BuoyMessage, ProtocolError> {
    if bytes.len() > MAX_SENTENCE_BYTES {
        return Err(malformed(format!("{} bytes exceeds the {MAX_SENTENCE_BYTES}-byte limit", bytes.len())));
    }
    let body = bytes.strip_prefix(b"$").ok_or_else(|| malformed("missing '$'"))?;
    let body = body.strip_suffix(b"\r\n").ok_or_else(|| malformed("missing CR LF terminator"))?;
    if body.len() < 3 || body[body.len() - 3] != b'*' {
        return Err(malformed("missing '*' checksum delimiter"));
    }
    let (payload, tail) = body.split_at(body.len() - 3);
    let stated = match (hex_digit(tail[1]), hex_digit(tail[2])) {
        (Some(hi), Some(lo)) => hi << 4 | lo,
        _ => return Err(malformed("checksum is not two uppercase hex digits")),
    };
    let computed = checksum(payload);
    if stated != computed {
        return Err(ProtocolError::ChecksumMismatch { stated, computed });
    }
    let text = std::str::from_utf8(payload).map_err(|_| malformed("payload is not ASCII"))?;
    let fields: Vec<&str> = text.split(',').collect();
    if fields.len() != 6 {
        return Err(malformed(format!("expected 6 fields, found {}", fields.len())));
    }
    if fields[0] != TALKER {
        return Err(malformed(format!("unknown sentence type {:?}", fields[0])));
    }
    let id = fields[1];
    if id.len() != 1 || !id.as_bytes()[0].is_ascii_digit() {
        return Err(malformed(format!("buoy id {id:?} is not a single digit")));
    }
    let time = parse_fixed("gnss_time", fields[2], 3, 5)?;
    if fields[2].starts_with('-') {
        return Err(out_of_range("gnss_time", fields[2]));
    }
    let m = BuoyMessage {
        buoy_id: id.as_bytes()[0] - b'0',
        gnss_time_ms: u32::try_from(time).map_err(|_| out_of_range("gnss_time", fields[2]))?,
        latitude_e7: i32::try_from(parse_fixed("latitude", fields[3], 7, 2)?)
            .map_err(|_| out_of_range("latitude", fields[3]))?,
        longitude_e7: i32::try_from(parse_fixed("longitude", fields[4], 7, 3)?)
            .map_err(|_| out_of_range("longitude", fields[4]))?,
        height_cm: i32::try_from(parse_fixed("height", fields[5], 2, 5)?)
            .map_err(|_| out_of_range("height", fields[5]))?,
    };
    m.check()?;
    Ok(m)
}

/// Slot layout of one frame: four messages, each followed by a guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSchedule {
    /// Transmission time of one message, seconds.
    pub message_duration: f64,
    pub guard_time: f64,
    pub frame_period: f64,
    /// Slot starts relative to the frame start, buoy 1 first.
    pub start_times: [f64; 4],
}

impl FrameSchedule {
    /// Separation between the first and the last transmission of a frame.
    pub fn span(&self) -> f64 {
        self.start_times[3] - self.start_times[0]
    }
}

/// Lays out the four slots. With `max_message_duration` set, a message that
/// takes longer than the cap is refused.
pub fn compute_schedule(
    message_bytes: u32,
    bit_rate: f64,
    guard: f64,
    max_message_duration: Option<f64>,
) -> Result<FrameSchedule, ProtocolError> {
    if message_bytes == 0 {
        return Err(ProtocolError::InvalidSchedule("message length must be positive".into()));
    }
    if !(bit_rate > 0.0 && bit_rate.is_finite()) {
        return Err(ProtocolError::InvalidSchedule(format!("bit rate {bit_rate} must be positive")));
    }
    if !(guard >= 0.0 && guard.is_finite()) {
        return Err(ProtocolError::InvalidSchedule(format!("guard time {guard} must be non-negative")));
    }
    let message_duration = 8.0 * message_bytes as f64 / bit_rate;
    if let Some(limit) = max_message_duration {
        if message_duration > limit {
            return Err(ProtocolError::BudgetExceeded { duration: message_duration, limit });
        }
    }
    let slot = message_duration + guard;
    Ok(FrameSchedule {
        message_duration,
        guard_time: guard,
        frame_period: 4.0 * slot,
        start_times: [0.0, slot, 2.0 * slot, 3.0 * slot],
    })
}

/// Absolute slot starts of frame `frame_index`, seconds from the first frame.
pub fn transmit_times(s: &FrameSchedule, frame_index: u64) -> [f64; 4] {
    let base = frame_index as f64 * s.frame_period;
    s.start_times.map(|t| base + t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> BuoyMessage {
        BuoyMessage {
            buoy_id: 1,
            gnss_time_ms: 43_200_000,
            latitude_e7: 367_201_000,
            longitude_e7: -44_203_000,
            height_cm: 0,
        }
    }

    #[test]
    fn checksum_matches_bytewise_oracle() {
        let payload = "UWPS,1,43200.000,36.7201000,-4.4203000,0.00";
        let mut oracle = 0u8;
        for ch in payload.chars() {
            oracle ^= ch as u8;
        }
        assert_eq!(checksum(payload.as_bytes()), oracle);
        let encoded = encode_message(&sample()).unwrap();
        assert_eq!(encoded, format!("${payload}*{oracle:02X}\r\n").into_bytes());
    }

    #[test]
    fn worst_case_fits_budget() {
        let m = BuoyMessage {
            buoy_id: 4,
            gnss_time_ms: MILLIS_PER_DAY - 1,
            latitude_e7: -LAT_LIMIT_E7,
            longitude_e7: -LON_LIMIT_E7 + 1,
            height_cm: -MAX_HEIGHT_CM,
        };
        let bytes = encode_message(&m).unwrap();
        assert!(bytes.len() <= MAX_SENTENCE_BYTES, "{}", bytes.len());
        assert_eq!(decode_message(&bytes), Ok(m));
    }

    #[test]
    fn encode_rejects_wide_fields() {
        let cases = [
            BuoyMessage { buoy_id: 5, ..sample() },
            BuoyMessage { gnss_time_ms: MILLIS_PER_DAY, ..sample() },
            BuoyMessage { latitude_e7: LAT_LIMIT_E7 + 1, ..sample() },
            BuoyMessage { longitude_e7: -LON_LIMIT_E7, ..sample() },
            BuoyMessage { height_cm: MAX_HEIGHT_CM + 1, ..sample() },
        ];
        for m in cases {
            assert!(matches!(encode_message(&m), Err(ProtocolError::FieldOverflow { .. })), "{m:?}");
        }
    }

    #[test]
    fn flipped_bit_is_a_checksum_mismatch() {
        let mut bytes = encode_message(&sample()).unwrap();
        bytes[10] ^= 0x01;
        assert!(matches!(decode_message(&bytes), Err(ProtocolError::ChecksumMismatch { .. })));
    }

    #[test]
    fn structural_errors() {
        let good = encode_message(&sample()).unwrap();
        let truncated = &good[..good.len() - 6];
        assert_eq!(decode_message(truncated).unwrap_err().name(), "MalformedSentence");
        assert_eq!(decode_message(&good[1..]).unwrap_err().name(), "MalformedSentence");
        assert_eq!(decode_message(&good[..good.len() - 2]).unwrap_err().name(), "MalformedSentence");
        assert_eq!(decode_message(b"").unwrap_err().name(), "MalformedSentence");
    }

    fn seal(payload: &str) -> Vec<u8> {
        format!("${payload}*{:02X}\r\n", checksum(payload.as_bytes())).into_bytes()
    }

    #[test]
    fn field_errors_after_valid_checksum() {
        let cases = [
            ("UWPS,1,43200.000,36.7201000,-4.4203000", "MalformedSentence"),
            ("UWPS,1,43200.000,36.7201000,-4.4203000,0.00,7", "MalformedSentence"),
            ("GPGGA,1,43200.000,36.7201000,-4.4203000,0.00", "MalformedSentence"),
            ("UWPS,1,43200.00,36.7201000,-4.4203000,0.00", "MalformedSentence"),
            ("UWPS,1,43200.000,036.7201000,-4.4203000,0.00", "MalformedSentence"),
            ("UWPS,1,43200.000,36.7201000,-4.4203000,-0.00", "MalformedSentence"),
            ("UWPS,1,43200.000,3x.7201000,-4.4203000,0.00", "MalformedSentence"),
            ("UWPS,0,43200.000,36.7201000,-4.4203000,0.00", "FieldRange"),
            ("UWPS,5,43200.000,36.7201000,-4.4203000,0.00", "FieldRange"),
            ("UWPS,1,86400.000,36.7201000,-4.4203000,0.00", "FieldRange"),
            ("UWPS,1,43200.000,90.0000001,-4.4203000,0.00", "FieldRange"),
            ("UWPS,1,43200.000,36.7201000,-180.0000000,0.00", "FieldRange"),
            ("UWPS,1,43200.000,36.7201000,180.0000001,0.00", "FieldRange"),
            ("UWPS,1,43200.000,36.7201000,-4.4203000,123456.00", "FieldRange"),
        ];
        for (payload, expected) in cases {
            assert_eq!(decode_message(&seal(payload)).unwrap_err().name(), expected, "{payload}");
        }
    }

    #[test]
    fn lowercase_checksum_rejected() {
        let bytes = (0..100)
            .map(|height_cm| encode_message(&BuoyMessage { height_cm, ..sample() }).unwrap())
            .find(|b| b[b.len() - 4..b.len() - 2].iter().any(|c| c.is_ascii_uppercase()))
            .unwrap();
        let lower = bytes.to_ascii_lowercase();
        let mut mixed = bytes.clone();
        let n = mixed.len();
        mixed[n - 4..n - 2].copy_from_slice(&lower[n - 4..n - 2]);
        assert_eq!(decode_message(&mixed).unwrap_err().name(), "MalformedSentence");
    }

    #[test]
    fn quantize_rounds_to_wire_units() {
        let g = GeodeticCoord::new(36.72010004, -4.42030006, 1.234).unwrap();
        let m = BuoyMessage::quantize(2, ClockTime::from_picos(43_200_000_600_000_000), &g).unwrap();
        assert_eq!(m.latitude_e7, 367_201_000);
        assert_eq!(m.longitude_e7, -44_203_001);
        assert_eq!(m.height_cm, 123);
        assert_eq!(m.gnss_time_ms, 43_200_001);
        let far = GeodeticCoord::new(0.0, 0.0, 200_000.0).unwrap();
        assert_eq!(BuoyMessage::quantize(1, ClockTime::ZERO, &far).unwrap_err().name(), "FieldOverflow");
        assert_eq!(
            BuoyMessage::quantize(1, ClockTime::from_millis(MILLIS_PER_DAY as i64), &g).unwrap_err().name(),
            "FieldOverflow"
        );
    }

    #[test]
    fn reference_schedule() {
        let s = compute_schedule(80, 640.0, 1.0, Some(MAX_MESSAGE_DURATION)).unwrap();
        assert_eq!(s.message_duration, 1.0);
        assert_eq!(s.start_times, [0.0, 2.0, 4.0, 6.0]);
        assert_eq!(s.frame_period, 8.0);
        assert_eq!(transmit_times(&s, 0), [0.0, 2.0, 4.0, 6.0]);
        assert_eq!(transmit_times(&s, 1), [8.0, 10.0, 12.0, 14.0]);
        assert_eq!(transmit_times(&s, 7)[0], 7.0 * s.frame_period);
        assert_eq!(s.span(), 6.0);
    }

    #[test]
    fn faster_link_shorter_frame() {
        let s = compute_schedule(80, 1280.0, 0.5, Some(MAX_MESSAGE_DURATION)).unwrap();
        assert_eq!(s.message_duration, 0.5);
        assert_eq!(s.frame_period, 4.0);
    }

    #[test]
    fn budget_cap() {
        let e = compute_schedule(80, 320.0, 1.0, Some(MAX_MESSAGE_DURATION)).unwrap_err();
        assert_eq!(e.name(), "BudgetExceeded");
        assert!(compute_schedule(80, 320.0, 1.0, None).is_ok());
        for (bytes, rate, guard) in [(0, 640.0, 1.0), (80, 0.0, 1.0), (80, 640.0, -1.0), (80, f64::NAN, 1.0)] {
            assert_eq!(compute_schedule(bytes, rate, guard, None).unwrap_err().name(), "InvalidSchedule");
        }
    }

    fn message() -> impl Strategy<Value = BuoyMessage> {
        (
            1u8..=4,
            0..MILLIS_PER_DAY,
            -LAT_LIMIT_E7..=LAT_LIMIT_E7,
            (-LON_LIMIT_E7 + 1)..=LON_LIMIT_E7,
            -MAX_HEIGHT_CM..=MAX_HEIGHT_CM,
        )
            .prop_map(|(buoy_id, gnss_time_ms, latitude_e7, longitude_e7, height_cm)| BuoyMessage {
                buoy_id,
                gnss_time_ms,
                latitude_e7,
                longitude_e7,
                height_cm,
            })
    }

    proptest! {
        #[test]
        fn round_trip(m in message()) {
            let bytes = encode_message(&m).unwrap();
            prop_assert!(bytes.len() <= MAX_SENTENCE_BYTES);
            prop_assert_eq!(decode_message(&bytes), Ok(m));
        }

        #[test]
        fn payload_corruption_detected(m in message(), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
            let mut bytes = encode_message(&m).unwrap();
            let payload_len = bytes.len() - 6;
            bytes[1 + pos.index(payload_len)] ^= flip;
            let is_mismatch = matches!(decode_message(&bytes), Err(ProtocolError::ChecksumMismatch { .. }));
            prop_assert!(is_mismatch);
        }

        #[test]
        fn accepted_bytes_are_canonical(bytes in prop::collection::vec(any::<u8>(), 0..90)) {
            if let Ok(m) = decode_message(&bytes) {
                prop_assert_eq!(encode_message(&m).unwrap(), bytes);
            }
        }

        #[test]
        fn slots_never_overlap(bytes in 1u32..400, rate in 50.0f64..10_000.0, guard in 0.0f64..5.0) {
            let s = compute_schedule(bytes, rate, guard, None).unwrap();
            for i in 0..3 {
                prop_assert!(s.start_times[i] + s.message_duration + s.guard_time <= s.start_times[i + 1] + 1e-12);
            }
            prop_assert!((s.frame_period - 4.0 * (s.message_duration + s.guard_time)).abs() < 1e-12);
        }
    }
}
