//! RINEX 3.04 observation files, restricted to one signal per constellation
//! (L1 C/A, G1, E1, B1I).
//!
//! Receivers report no lock counter in RINEX, so the reader rebuilds it:
//! a satellite's count grows by one per epoch while it stays tracked
//! without a loss-of-lock flag, and restarts at zero otherwise. A gap
//! longer than the nominal interval restarts every count.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate, Timelike};
use thiserror::Error;

use crate::gnss::{Constellation, EcefVector, Epoch, GpsTime, Observation, SatelliteId, SPEED_OF_LIGHT};
use crate::gnss::{FREQ_G1_BASE, FREQ_G1_STEP};

const SECONDS_PER_DAY: f64 = 86_400.0;
/// Largest magnitude an F14.3 field holds.
const FIELD_LIMIT: f64 = 9_999_999_999.999;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RinexError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: malformed epoch: {reason}")]
    MalformedEpoch { line: usize, reason: String },
    #[error("line {line}: unsupported RINEX version {version}")]
    UnsupportedVersion { line: usize, version: String },
    #[error("{sat}: value {value} does not fit the observation field")]
    Unrepresentable { sat: SatelliteId, value: f64 },
    #[error("I/O failure: {0}")]
    Io(String),
}

impl RinexError {
    pub fn line(&self) -> Option<usize> {
        match self {
            RinexError::MalformedHeader { line, .. }
            | RinexError::MalformedEpoch { line, .. }
            | RinexError::UnsupportedVersion { line, .. } => Some(*line),
            _ => None,
        }
    }
}

impl From<std::io::Error> for RinexError {
    fn from(e: std::io::Error) -> Self {
        RinexError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RinexHeader {
    pub version: f64,
    pub marker_name: String,
    pub approx_position: Option<EcefVector>,
    pub observation_codes: BTreeMap<Constellation, Vec<String>>,
    /// Nominal epoch spacing (s).
    pub interval: Option<f64>,
    /// GLONASS slot to frequency channel.
    pub glonass_channels: BTreeMap<u8, i8>,
}

impl RinexHeader {
    /// Header for writing `epochs`: the codes this crate reads, for every
    /// constellation present, and the GLONASS channels implied by the
    /// observation wavelengths.
    pub fn for_epochs(marker_name: &str, epochs: &[Epoch]) -> Self {
        let mut observation_codes = BTreeMap::new();
        for o in epochs.iter().flat_map(|e| &e.observations) {
            observation_codes.entry(o.sat.constellation).or_insert_with(|| canonical_codes(o.sat.constellation));
        }
        let interval = match epochs {
            [a, b, ..] => Some(b.time.diff(&a.time)),
            _ => None,
        };
        Self {
            version: 3.04,
            marker_name: marker_name.to_string(),
            approx_position: None,
            observation_codes,
            interval,
            glonass_channels: glonass_channels(epochs),
        }
    }
}

/// GLONASS channels recovered from observation wavelengths.
pub fn glonass_channels(epochs: &[Epoch]) -> BTreeMap<u8, i8> {
    epochs
        .iter()
        .flat_map(|e| &e.observations)
        .filter(|o| o.sat.constellation == Constellation::Glonass && o.wavelength > 0.0)
        .map(|o| {
            let channel = ((SPEED_OF_LIGHT / o.wavelength - FREQ_G1_BASE) / FREQ_G1_STEP).round();
            (o.sat.prn, channel as i8)
        })
        .collect()
}

fn canonical_codes(c: Constellation) -> Vec<String> {
    let band = primary_bands(c)[0];
    let attribute = if c == Constellation::BeiDou { 'I' } else { 'C' };
    ['C', 'L', 'D', 'S'].iter().map(|t| format!("{t}{band}{attribute}")).collect()
}

/// Frequency band digits accepted as the processed signal. BeiDou B1I is
/// band 2 in RINEX 3.04 and band 1 in 3.02.
fn primary_bands(c: Constellation) -> &'static [char] {
    match c {
        Constellation::BeiDou => &['2', '1'],
        _ => &['1'],
    }
}

/// Extra information the file itself may lack.
#[derive(Debug, Clone, Default)]
pub struct RinexOptions {
    /// GLONASS slot to channel, consulted when the header has no entry.
    pub glonass_channels: BTreeMap<u8, i8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RinexObs {
    pub header: RinexHeader,
    pub epochs: Vec<Epoch>,
    /// Records that were dropped; parsing continued after each.
    pub warnings: Vec<RinexError>,
}

pub fn parse_rinex_obs(reader: impl Read) -> Result<RinexObs, RinexError> {
    parse_rinex_obs_with(reader, &RinexOptions::default())
}

pub fn parse_rinex_obs_with(mut reader: impl Read, options: &RinexOptions) -> Result<RinexObs, RinexError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    parse_bytes(&bytes, options)
}

/// Parses an in-memory file. Never panics on arbitrary input.
pub fn parse_bytes(bytes: &[u8], options: &RinexOptions) -> Result<RinexObs, RinexError> {
    let lines: Vec<&[u8]> = bytes.split(|b| *b == b'\n').map(|l| l.strip_suffix(b"\r").unwrap_or(l)).collect();
    let (header, body_start) = parse_header(&lines)?;
    let mut parser = BodyParser::new(&header, options);
    parser.run(&lines, body_start);
    let (epochs, warnings) = (parser.epochs, parser.warnings);
    Ok(RinexObs { header, epochs, warnings })
}

/// Columns `a..b` of a line; empty when out of range, a non-numeric
/// marker when not UTF-8.
fn field(line: &[u8], a: usize, b: usize) -> &str {
    let end = b.min(line.len());
    if a >= end {
        return "";
    }
    std::str::from_utf8(&line[a..end]).unwrap_or("\u{fffd}")
}

fn label(line: &[u8]) -> &str {
    field(line, 60, 80).trim()
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_header(lines: &[&[u8]]) -> Result<(RinexHeader, usize), RinexError> {
    let header_err = |line: usize, reason: &str| RinexError::MalformedHeader { line, reason: reason.to_string() };
    let first = lines.first().copied().unwrap_or_default();
    if label(first) != "RINEX VERSION / TYPE" {
        return Err(header_err(1, "first record must be RINEX VERSION / TYPE"));
    }
    let version_text = field(first, 0, 9).trim().to_string();
    let version = parse_f64(&version_text).filter(|v| (3.0..4.0).contains(v));
    let Some(version) = version else {
        return Err(RinexError::UnsupportedVersion { line: 1, version: version_text });
    };
    if field(first, 20, 21) != "O" {
        return Err(header_err(1, "not an observation file"));
    }

    let mut header = RinexHeader { version, ..Default::default() };
    // Constellation and code count still expected on continuation lines.
    let mut pending_codes: Option<(Option<Constellation>, usize)> = None;
    let mut pending_slots = 0usize;
    for (i, line) in lines.iter().enumerate().skip(1) {
        let n = i + 1;
        match label(line) {
            "END OF HEADER" => {
                if pending_codes.is_some_and(|(_, left)| left > 0) {
                    return Err(header_err(n, "observation type list ended early"));
                }
                if header.observation_codes.is_empty() {
                    return Err(header_err(n, "no SYS / # / OBS TYPES record"));
                }
                return Ok((header, i + 1));
            }
            "MARKER NAME" => header.marker_name = field(line, 0, 60).trim().to_string(),
            "APPROX POSITION XYZ" => {
                let xyz: Option<Vec<f64>> = (0..3).map(|k| parse_f64(field(line, 14 * k, 14 * k + 14))).collect();
                match xyz {
                    Some(v) => header.approx_position = Some(EcefVector::new(v[0], v[1], v[2])),
                    None => return Err(header_err(n, "bad APPROX POSITION XYZ")),
                }
            }
            "INTERVAL" => {
                header.interval = parse_f64(field(line, 0, 10)).filter(|v| *v > 0.0);
                if header.interval.is_none() {
                    return Err(header_err(n, "bad INTERVAL"));
                }
            }
            "SYS / # / OBS TYPES" => {
                let system = field(line, 0, 1);
                let (constellation, left) = if system.trim().is_empty() {
                    match pending_codes {
                        Some((c, left)) if left > 0 => (c, left),
                        _ => return Err(header_err(n, "unexpected observation type continuation")),
                    }
                } else {
                    let count: usize =
                        field(line, 3, 6).trim().parse().map_err(|_| header_err(n, "bad observation type count"))?;
                    let c = system.chars().next().and_then(Constellation::from_letter);
                    if !"GRECJSI".contains(system) {
                        return Err(header_err(n, "unknown satellite system"));
                    }
                    (c, count)
                };
                let on_line = left.min(13);
                let mut codes = Vec::with_capacity(on_line);
                for k in 0..on_line {
                    let code = field(line, 7 + 4 * k, 10 + 4 * k).trim();
                    if code.len() != 3 || !code.is_ascii() {
                        return Err(header_err(n, "bad observation code"));
                    }
                    codes.push(code.to_string());
                }
                if let Some(c) = constellation {
                    header.observation_codes.entry(c).or_default().extend(codes);
                }
                pending_codes = Some((constellation, left - on_line));
            }
            "GLONASS SLOT / FRQ #" => {
                let count_field = field(line, 0, 3).trim();
                let left = if count_field.is_empty() {
                    pending_slots
                } else {
                    count_field.parse().map_err(|_| header_err(n, "bad GLONASS slot count"))?
                };
                let on_line = left.min(8);
                for k in 0..on_line {
                    let sat: SatelliteId =
                        field(line, 4 + 7 * k, 7 + 7 * k).parse().map_err(|_| header_err(n, "bad GLONASS slot"))?;
                    let channel: i8 = field(line, 8 + 7 * k, 10 + 7 * k)
                        .trim()
                        .parse()
                        .ok()
                        .filter(|c| (-7..=6).contains(c))
                        .ok_or_else(|| header_err(n, "bad GLONASS frequency channel"))?;
                    if sat.constellation != Constellation::Glonass {
                        return Err(header_err(n, "non-GLONASS satellite in slot table"));
                    }
                    header.glonass_channels.insert(sat.prn, channel);
                }
                pending_slots = left - on_line;
            }
            _ => {}
        }
    }
    Err(header_err(lines.len(), "missing END OF HEADER"))
}

/// Column indices of the processed observables within one system's code list.
#[derive(Debug, Clone, Copy, Default)]
struct CodeMap {
    count: usize,
    code: Option<usize>,
    phase: Option<usize>,
    doppler: Option<usize>,
    snr: Option<usize>,
}

impl CodeMap {
    fn new(c: Constellation, codes: &[String]) -> Self {
        let find = |kind: char| {
            codes.iter().position(|s| {
                let mut ch = s.chars();
                ch.next() == Some(kind) && ch.next().is_some_and(|b| primary_bands(c).contains(&b))
            })
        };
        Self { count: codes.len(), code: find('C'), phase: find('L'), doppler: find('D'), snr: find('S') }
    }
}

struct BodyParser<'a> {
    maps: BTreeMap<Constellation, CodeMap>,
    header: &'a RinexHeader,
    options: &'a RinexOptions,
    epochs: Vec<Epoch>,
    warnings: Vec<RinexError>,
    locks: BTreeMap<SatelliteId, u32>,
    interval: Option<f64>,
    warned_channel: std::collections::BTreeSet<u8>,
}

/// One satellite line, before lock reconstruction.
struct RawObservation {
    sat: SatelliteId,
    pseudorange: f64,
    carrier_phase: f64,
    doppler: f64,
    loss_of_lock: bool,
    snr: f64,
}

impl<'a> BodyParser<'a> {
    fn new(header: &'a RinexHeader, options: &'a RinexOptions) -> Self {
        let maps = header.observation_codes.iter().map(|(c, codes)| (*c, CodeMap::new(*c, codes))).collect();
        Self {
            maps,
            header,
            options,
            epochs: Vec::new(),
            warnings: Vec::new(),
            locks: BTreeMap::new(),
            interval: header.interval,
            warned_channel: Default::default(),
        }
    }

    fn warn(&mut self, error: RinexError) {
        log::warn!("{error}");
        self.warnings.push(error);
    }

    fn run(&mut self, lines: &[&[u8]], start: usize) {
        let mut i = start;
        while i < lines.len() {
            let line = lines[i];
            if line.iter().all(u8::is_ascii_whitespace) {
                i += 1;
                continue;
            }
            if line.first() != Some(&b'>') {
                self.warn(RinexError::MalformedEpoch { line: i + 1, reason: "expected an epoch record".into() });
                i += 1;
                while i < lines.len() && lines[i].first() != Some(&b'>') {
                    i += 1;
                }
                continue;
            }
            i = self.epoch(lines, i);
        }
    }

    /// Parses the epoch record starting at line `i`; returns the index of
    /// the first line after it.
    fn epoch(&mut self, lines: &[&[u8]], i: usize) -> usize {
        let line = lines[i];
        let malformed = |line: usize, reason: &str| RinexError::MalformedEpoch { line, reason: reason.to_string() };
        let flag = field(line, 31, 32).trim().parse::<u8>();
        let count = field(line, 32, 35).trim().parse::<usize>();
        let (Ok(flag), Ok(count)) = (flag, count) else {
            self.warn(malformed(i + 1, "bad epoch flag or satellite count"));
            return skip_to_next_epoch(lines, i + 1);
        };
        // Event records carry `count` special lines rather than satellites.
        if flag > 1 {
            let mut j = i + 1;
            for _ in 0..count {
                if j >= lines.len() || lines[j].first() == Some(&b'>') {
                    break;
                }
                j += 1;
            }
            return j;
        }
        let time = match epoch_time(line) {
            Some(t) => t,
            None => {
                self.warn(malformed(i + 1, "bad epoch time"));
                return skip_to_next_epoch(lines, i + 1);
            }
        };
        let mut raw = Vec::with_capacity(count);
        let mut j = i + 1;
        for k in 0..count {
            let Some(sat_line) = lines.get(j).filter(|l| l.first() != Some(&b'>')) else {
                let at = j.min(lines.len());
                self.warn(malformed(at, &format!("expected {count} satellites, found {k}")));
                return j;
            };
            match self.satellite(sat_line, j + 1) {
                Ok(Some(obs)) => raw.push(obs),
                Ok(None) => {}
                Err(e) => {
                    self.warn(e);
                    return skip_to_next_epoch(lines, j + 1);
                }
            }
            j += 1;
        }
        if let Some(prev) = self.epochs.last() {
            let dt = time.diff(&prev.time);
            if !(dt > 0.0) {
                self.warn(malformed(i + 1, "epoch time does not increase"));
                return j;
            }
            let interval = *self.interval.get_or_insert(dt);
            if dt > 1.5 * interval {
                self.locks.clear();
            }
        }
        let mut observations = Vec::with_capacity(raw.len());
        let mut locks = BTreeMap::new();
        for r in raw {
            let Some(wavelength) = self.wavelength(r.sat) else {
                continue;
            };
            let lock_count = match (r.loss_of_lock, self.locks.get(&r.sat)) {
                (false, Some(c)) => c.saturating_add(1),
                _ => 0,
            };
            locks.insert(r.sat, lock_count);
            observations.push(Observation {
                sat: r.sat,
                pseudorange: r.pseudorange,
                carrier_phase: r.carrier_phase,
                doppler: r.doppler,
                wavelength,
                lock_count,
                loss_of_lock: r.loss_of_lock,
                snr: r.snr,
            });
        }
        match Epoch::new(time, observations) {
            Ok(epoch) => {
                self.locks = locks;
                self.epochs.push(epoch);
            }
            Err(e) => self.warn(malformed(i + 1, &e.to_string())),
        }
        j
    }

    fn wavelength(&mut self, sat: SatelliteId) -> Option<f64> {
        if sat.constellation != Constellation::Glonass {
            return sat.constellation.wavelength(None);
        }
        let channel =
            self.header.glonass_channels.get(&sat.prn).or_else(|| self.options.glonass_channels.get(&sat.prn)).copied();
        if channel.is_none() && self.warned_channel.insert(sat.prn) {
            log::warn!("{sat}: no frequency channel known, observations skipped");
        }
        sat.constellation.wavelength(channel)
    }

    fn satellite(&self, line: &[u8], n: usize) -> Result<Option<RawObservation>, RinexError> {
        let malformed = |reason: String| RinexError::MalformedEpoch { line: n, reason };
        let id = field(line, 0, 3);
        let letter = id.chars().next().unwrap_or(' ');
        if !"GRECJSI".contains(letter) || letter == ' ' {
            return Err(malformed(format!("bad satellite `{id}`")));
        }
        let Some(map) = Constellation::from_letter(letter).and_then(|c| self.maps.get(&c).copied()) else {
            return Ok(None);
        };
        let sat: SatelliteId = id.parse().map_err(|_| malformed(format!("bad satellite `{id}`")))?;
        let value = |k: Option<usize>| -> Result<Option<(f64, u8, u8)>, RinexError> {
            let Some(k) = k else { return Ok(None) };
            let start = 3 + 16 * k;
            let text = field(line, start, start + 14);
            if text.trim().is_empty() {
                return Ok(None);
            }
            let v = parse_f64(text).ok_or_else(|| malformed(format!("{sat}: bad value `{}`", text.trim())))?;
            let digit = |c: usize| -> Result<u8, RinexError> {
                match field(line, c, c + 1) {
                    "" | " " => Ok(0),
                    d => d.parse::<u8>().map_err(|_| malformed(format!("{sat}: bad indicator `{d}`"))),
                }
            };
            Ok(Some((v, digit(start + 14)?, digit(start + 15)?)))
        };
        if map.count > 0
            && line.len() > 3 + 16 * map.count + 2
            && !field(line, 3 + 16 * map.count, line.len()).trim().is_empty()
        {
            return Err(malformed(format!("{sat}: more fields than observation types")));
        }
        let code = value(map.code)?;
        let phase = value(map.phase)?;
        let doppler = value(map.doppler)?;
        let snr = value(map.snr)?;
        let (Some(code), Some(phase), Some(doppler)) = (code, phase, doppler) else {
            log::debug!("line {n}: {sat} lacks code, phase or Doppler; skipped");
            return Ok(None);
        };
        let snr = match snr {
            Some((s, _, _)) => s,
            None => 6.0 * f64::from(code.2),
        };
        Ok(Some(RawObservation {
            sat,
            pseudorange: code.0,
            carrier_phase: phase.0,
            doppler: doppler.0,
            loss_of_lock: phase.1 & 1 == 1,
            snr,
        }))
    }
}

fn skip_to_next_epoch(lines: &[&[u8]], mut i: usize) -> usize {
    while i < lines.len() && lines[i].first() != Some(&b'>') {
        i += 1;
    }
    i
}

fn gps_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1980, 1, 6).expect("valid date")
}

/// GPS calendar time of an epoch record.
fn epoch_time(line: &[u8]) -> Option<GpsTime> {
    let int = |a, b| field(line, a, b).trim().parse::<u32>().ok();
    let year = field(line, 2, 6).trim().parse::<i32>().ok()?;
    let date = NaiveDate::from_ymd_opt(year, int(7, 9)?, int(10, 12)?)?;
    let (hour, minute) = (int(13, 15)?, int(16, 18)?);
    let seconds = parse_f64(field(line, 18, 29))?;
    if hour > 23 || minute > 59 || !(0.0..61.0).contains(&seconds) {
        return None;
    }
    let days = date.signed_duration_since(gps_epoch()).num_days();
    let week = i32::try_from(days.div_euclid(7)).ok()?;
    let tow = days.rem_euclid(7) as f64 * SECONDS_PER_DAY + f64::from(hour * 3600 + minute * 60) + seconds;
    Some(GpsTime::new(week, tow))
}

struct Calendar {
    year: i32,
    month: u32,
    day: u32,
    hour: u32,
    minute: u32,
    /// Seconds in units of 1e-7 s.
    ticks: i64,
}

fn calendar(time: &GpsTime) -> Calendar {
    let day_of_week = (time.tow / SECONDS_PER_DAY).floor();
    let mut days = i64::from(time.week) * 7 + day_of_week as i64;
    let mut ticks = ((time.tow - day_of_week * SECONDS_PER_DAY) * 1e7).round() as i64;
    if ticks >= 864_000_000_000 {
        ticks -= 864_000_000_000;
        days += 1;
    }
    let date = gps_epoch() + chrono::Duration::days(days);
    let t = chrono::NaiveTime::from_num_seconds_from_midnight_opt((ticks / 10_000_000) as u32, 0).expect("in range");
    Calendar {
        year: date.year(),
        month: date.month(),
        day: date.day(),
        hour: t.hour(),
        minute: t.minute(),
        ticks: ticks % 600_000_000,
    }
}

fn seconds_field(ticks: i64) -> String {
    format!("{:>2}.{:07}", ticks / 10_000_000, ticks % 10_000_000)
}

fn header_line(out: &mut impl Write, content: &str, label: &str) -> std::io::Result<()> {
    writeln!(out, "{content:<60}{label}")
}

fn obs_field(sat: SatelliteId, value: f64) -> Result<String, RinexError> {
    if !value.is_finite() || value.abs() > FIELD_LIMIT {
        return Err(RinexError::Unrepresentable { sat, value });
    }
    Ok(format!("{value:14.3}"))
}

/// Signal strength digit for a carrier-to-noise density (dB-Hz), taken
/// from the value as written with three decimals.
fn strength_digit(snr: f64) -> char {
    let written: f64 = format!("{snr:.3}").parse().unwrap_or(snr);
    let d = (written / 6.0).floor().clamp(1.0, 9.0) as u32;
    char::from_digit(d, 10).unwrap_or('1')
}

/// Writes a RINEX 3.04 observation file. Values carry three decimals.
///
/// The observation types written are always code, phase, Doppler and
/// signal strength of the processed signal; the header's own code lists
/// only decide which constellations are declared (GPS when none are).
pub fn write_rinex_obs(header: &RinexHeader, epochs: &[Epoch], mut out: impl Write) -> Result<(), RinexError> {
    header_line(&mut out, &format!("{:>9.2}{:11}{:<20}{:<20}", 3.04, "", "O", "M"), "RINEX VERSION / TYPE")?;
    header_line(&mut out, &format!("{:<20}{:<20}{:<20}", "loopgnss", "", ""), "PGM / RUN BY / DATE")?;
    header_line(&mut out, &header.marker_name, "MARKER NAME")?;
    if let Some(p) = header.approx_position {
        header_line(&mut out, &format!("{:14.4}{:14.4}{:14.4}", p.x, p.y, p.z), "APPROX POSITION XYZ")?;
    }
    let mut systems: Vec<Constellation> = header.observation_codes.keys().copied().collect();
    for o in epochs.iter().flat_map(|e| &e.observations) {
        if !systems.contains(&o.sat.constellation) {
            systems.push(o.sat.constellation);
        }
    }
    if systems.is_empty() {
        systems.push(Constellation::Gps);
    }
    systems.sort();
    for c in &systems {
        let codes = canonical_codes(*c);
        let list: String = codes.iter().map(|s| format!(" {s}")).collect();
        header_line(&mut out, &format!("{}  {:>3}{list}", c.letter(), codes.len()), "SYS / # / OBS TYPES")?;
    }
    if let Some(interval) = header.interval {
        header_line(&mut out, &format!("{interval:10.3}"), "INTERVAL")?;
    }
    if let Some(first) = epochs.first() {
        let c = calendar(&first.time);
        let content = format!(
            "{:6}{:6}{:6}{:6}{:6}{:>13}     GPS",
            c.year,
            c.month,
            c.day,
            c.hour,
            c.minute,
            seconds_field(c.ticks)
        );
        header_line(&mut out, &content, "TIME OF FIRST OBS")?;
    }
    let mut channels = header.glonass_channels.clone();
    channels.extend(glonass_channels(epochs));
    if !channels.is_empty() || systems.contains(&Constellation::Glonass) {
        let entries: Vec<String> = channels.iter().map(|(prn, ch)| format!(" R{prn:02} {ch:>2}")).collect();
        let chunks: Vec<&[String]> = if entries.is_empty() { vec![&[]] } else { entries.chunks(8).collect() };
        for (k, chunk) in chunks.iter().enumerate() {
            let count = if k == 0 { format!("{:>3}", entries.len()) } else { "   ".to_string() };
            header_line(&mut out, &format!("{count}{}", chunk.concat()), "GLONASS SLOT / FRQ #")?;
        }
    }
    header_line(&mut out, "", "END OF HEADER")?;

    for epoch in epochs {
        let c = calendar(&epoch.time);
        writeln!(
            out,
            "> {:4} {:02} {:02} {:02} {:02}{:>11}  0{:3}",
            c.year,
            c.month,
            c.day,
            c.hour,
            c.minute,
            seconds_field(c.ticks),
            epoch.observations.len()
        )?;
        for o in &epoch.observations {
            let ssi = strength_digit(o.snr);
            let lli = if o.loss_of_lock { '1' } else { ' ' };
            writeln!(
                out,
                "{}{} {ssi}{}{lli}{ssi}{} {ssi}{}",
                o.sat,
                obs_field(o.sat, o.pseudorange)?,
                obs_field(o.sat, o.carrier_phase)?,
                obs_field(o.sat, o.doppler)?,
                obs_field(o.sat, o.snr)?,
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calendar_round_trip() {
        for (week, tow) in [(2200, 0.0), (2200, 86_399.5), (1, 604_799.9999999), (2300, 345_600.25)] {
            let t = GpsTime::new(week, tow);
            let c = calendar(&t);
            let line = format!(
                "> {:4} {:02} {:02} {:02} {:02}{:>11}  0  0",
                c.year,
                c.month,
                c.day,
                c.hour,
                c.minute,
                seconds_field(c.ticks)
            );
            let back = epoch_time(line.as_bytes()).unwrap();
            assert!(back.diff(&t).abs() < 1e-7, "{line}: {back:?} vs {t:?}");
        }
        // GPS week 0 starts on 1980-01-06.
        let c = calendar(&GpsTime::new(0, 0.0));
        assert_eq!((c.year, c.month, c.day), (1980, 1, 6));
    }

    #[test]
    fn field_formatting_rounds_to_millimeters() {
        assert_eq!(obs_field(SatelliteId::gps(1), 20_000_000.123_45).unwrap().trim(), "20000000.123");
        assert!(obs_field(SatelliteId::gps(1), f64::NAN).is_err());
        assert!(obs_field(SatelliteId::gps(1), 2e10).is_err());
    }

    #[test]
    fn canonical_codes_per_system() {
        assert_eq!(canonical_codes(Constellation::Gps), ["C1C", "L1C", "D1C", "S1C"]);
        assert_eq!(canonical_codes(Constellation::BeiDou), ["C2I", "L2I", "D2I", "S2I"]);
    }

    #[test]
    fn strength_digits() {
        assert_eq!(strength_digit(45.0), '7');
        assert_eq!(strength_digit(0.0), '1');
        assert_eq!(strength_digit(99.0), '9');
        assert_eq!(strength_digit(41.9996), '7');
    }
}
