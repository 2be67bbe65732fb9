//! Checkpoint/restart: a registry of named references to live simulation
//! data, written to and read back from a single `.lxrs` file.
//!
//! File layout (little-endian):
//!
//! ```text
//! "LXRS" | version u32 | entry count u32
//! per entry: name len u32 | name bytes | kind u8 | payload len u64 | payload
//! CRC32 of everything above, u32
//! ```
//!
//! Payloads: scalar-real is one f64, scalar-int one i64, vector the raw f64
//! values. A time history stores order u32, vector length u64, time f64,
//! dt f64, step index u64, then the `order` vectors, most recent first.

use std::cell::RefCell;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use thiserror::Error;

use crate::prm::{ParamTree, PrmError};

pub const MAGIC: &[u8; 4] = b"LXRS";
pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "lxrs";

#[derive(Debug, Error)]
pub enum RestartError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt checkpoint: {0}")]
    Corruption(String),
    #[error("checkpoint schema mismatch: {0}")]
    Schema(String),
    #[error(transparent)]
    Params(#[from] PrmError),
}

pub type Result<T, E = RestartError> = std::result::Result<T, E>;

/// Shared handle to data that a registry reads on serialize and overwrites
/// on restart.
pub type Shared<T> = Rc<RefCell<T>>;

pub fn shared<T>(value: T) -> Shared<T> {
    Rc::new(RefCell::new(value))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum EntryKind {
    ScalarReal = 0,
    ScalarInt = 1,
    Vector = 2,
    TimeHistory = 3,
}

impl EntryKind {
    fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(EntryKind::ScalarReal),
            1 => Some(EntryKind::ScalarInt),
            2 => Some(EntryKind::Vector),
            3 => Some(EntryKind::TimeHistory),
            _ => None,
        }
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryKind::ScalarReal => "scalar-real",
            EntryKind::ScalarInt => "scalar-int",
            EntryKind::Vector => "vector",
            EntryKind::TimeHistory => "time-history",
        })
    }
}

/// Window of the most recent solutions of a multistep time integrator.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeHistory {
    /// Most recent first; `solutions.len()` is the order.
    pub solutions: Vec<Vec<f64>>,
    pub time: f64,
    pub dt: f64,
    pub step_index: u64,
}

impl TimeHistory {
    /// History of order `order` with every slot set to `initial`.
    pub fn new(order: usize, initial: Vec<f64>, time: f64, dt: f64) -> Result<Self> {
        let h = TimeHistory {
            solutions: vec![initial; order],
            time,
            dt,
            step_index: 0,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn order(&self) -> usize {
        self.solutions.len()
    }

    pub fn len(&self) -> usize {
        self.solutions.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn latest(&self) -> &[f64] {
        &self.solutions[0]
    }

    /// Pushes a new solution, dropping the oldest, and advances time.
    pub fn advance(&mut self, next: Vec<f64>) {
        self.solutions.rotate_right(1);
        self.solutions[0] = next;
        self.step_index += 1;
        self.time += self.dt;
    }

    fn validate(&self) -> Result<()> {
        if self.solutions.is_empty() {
            return Err(RestartError::Contract("time history order must be at least 1".into()));
        }
        let n = self.solutions[0].len();
        if self.solutions.iter().any(|s| s.len() != n) {
            return Err(RestartError::Contract("time history vectors differ in length".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(RestartError::Contract(format!("time step must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Slot {
    ScalarReal(Shared<f64>),
    ScalarInt(Shared<i64>),
    Vector(Shared<Vec<f64>>),
    TimeHistory(Shared<TimeHistory>),
}

impl Slot {
    fn kind(&self) -> EntryKind {
        match self {
            Slot::ScalarReal(_) => EntryKind::ScalarReal,
            Slot::ScalarInt(_) => EntryKind::ScalarInt,
            Slot::Vector(_) => EntryKind::Vector,
            Slot::TimeHistory(_) => EntryKind::TimeHistory,
        }
    }
}

/// Time and step recovered by [`RestartRegistry::restart`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestartInfo {
    /// From the first time history, else the requested step.
    pub step_index: u64,
    pub time: Option<f64>,
}

/// Ordered, uniquely named references to the data making up a checkpoint.
/// Several models may attach to the same registry to share one file.
#[derive(Clone, Debug, Default)]
pub struct RestartRegistry {
    entries: Vec<(String, Slot)>,
}

impl RestartRegistry {
    pub fn new() -> Self {
        RestartRegistry::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(name, kind)` of every entry in registration order.
    pub fn entries(&self) -> Vec<(&str, EntryKind)> {
        self.entries.iter().map(|(n, s)| (n.as_str(), s.kind())).collect()
    }

    fn attach(&mut self, name: &str, slot: Slot) -> Result<()> {
        if name.is_empty() {
            return Err(RestartError::Contract("entry name must not be empty".into()));
        }
        if u32::try_from(name.len()).is_err() {
            return Err(RestartError::Contract("entry name too long".into()));
        }
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(RestartError::Contract(format!("entry '{name}' already attached")));
        }
        self.entries.push((name.to_string(), slot));
        Ok(())
    }

    pub fn attach_scalar(&mut self, name: &str, value: Shared<f64>) -> Result<()> {
        self.attach(name, Slot::ScalarReal(value))
    }

    pub fn attach_int(&mut self, name: &str, value: Shared<i64>) -> Result<()> {
        self.attach(name, Slot::ScalarInt(value))
    }

    pub fn attach_vector(&mut self, name: &str, value: Shared<Vec<f64>>) -> Result<()> {
        self.attach(name, Slot::Vector(value))
    }

    pub fn attach_time_history(&mut self, name: &str, value: Shared<TimeHistory>) -> Result<()> {
        value.borrow().validate()?;
        self.attach(name, Slot::TimeHistory(value))
    }

    /// Checkpoint bytes of the current state.
    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.entries.is_empty() {
            return Err(RestartError::Contract("nothing attached to serialize".into()));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, slot) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(slot.kind() as u8);
            let payload = encode_payload(slot)?;
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&payload);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Writes `<basename>_<step:06>.lxrs` and returns its path.
    pub fn serialize(&self, basename: &Path, step_index: u64) -> Result<PathBuf> {
        let bytes = self.encode()?;
        let path = checkpoint_path(basename, step_index);
        std::fs::write(&path, bytes).map_err(|source| RestartError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    /// Overwrites every attached value from checkpoint bytes. Nothing is
    /// modified unless the whole file validates against the registry.
    pub fn decode(&self, bytes: &[u8], requested_step: u64) -> Result<RestartInfo> {
        if bytes.len() < MAGIC.len() + 12 {
            return Err(RestartError::Corruption(format!("file too short ({} bytes)", bytes.len())));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(RestartError::Corruption(format!(
                "CRC mismatch (stored {stored:08x}, computed {actual:08x})"
            )));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(RestartError::Corruption("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(RestartError::Schema(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let count = r.u32()? as usize;
        if count != self.entries.len() {
            return Err(RestartError::Schema(format!(
                "file has {count} entries, registry has {}",
                self.entries.len()
            )));
        }
        let mut staged = Vec::with_capacity(count);
        for (name, slot) in &self.entries {
            let name_len = r.u32()? as usize;
            let file_name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
            let kind_byte = r.u8()?;
            let kind = EntryKind::from_u8(kind_byte)
                .ok_or_else(|| RestartError::Corruption(format!("entry '{file_name}' has unknown kind {kind_byte}")))?;
            if file_name != *name || kind != slot.kind() {
                return Err(RestartError::Schema(format!(
                    "file entry '{file_name}' ({kind}) does not match registry entry '{name}' ({})",
                    slot.kind()
                )));
            }
            let len = usize::try_from(r.u64()?)
                .map_err(|_| RestartError::Corruption("payload length overflow".into()))?;
            staged.push(decode_payload(name, slot, r.take(len)?)?);
        }
        if r.pos != body.len() {
            return Err(RestartError::Corruption(format!(
                "{} trailing bytes after the last entry",
                body.len() - r.pos
            )));
        }

        let mut info = RestartInfo {
            step_index: requested_step,
            time: None,
        };
        for ((_, slot), value) in self.entries.iter().zip(staged) {
            match (slot, value) {
                (Slot::ScalarReal(s), Decoded::Real(v)) => *s.borrow_mut() = v,
                (Slot::ScalarInt(s), Decoded::Int(v)) => *s.borrow_mut() = v,
                (Slot::Vector(s), Decoded::Vector(v)) => *s.borrow_mut() = v,
                (Slot::TimeHistory(s), Decoded::History(h)) => {
                    if info.time.is_none() {
                        info = RestartInfo {
                            step_index: h.step_index,
                            time: Some(h.time),
                        };
                    }
                    *s.borrow_mut() = h;
                }
                _ => unreachable!("payload decoded for its own kind"),
            }
        }
        Ok(info)
    }

    /// Reads `<basename>_<step:06>.lxrs` into the attached data.
    pub fn restart(&self, basename: &Path, step_index: u64) -> Result<RestartInfo> {
        let path = checkpoint_path(basename, step_index);
        let bytes = std::fs::read(&path).map_err(|source| RestartError::Io {
            path: path.clone(),
            source,
        })?;
        self.decode(&bytes, step_index)
    }
}

pub fn checkpoint_path(basename: &Path, step_index: u64) -> PathBuf {
    let mut s = OsString::from(basename.as_os_str());
    s.push(format!("_{step_index:06}.{EXTENSION}"));
    PathBuf::from(s)
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn encode_payload(slot: &Slot) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match slot {
        Slot::ScalarReal(s) => out.extend_from_slice(&s.borrow().to_le_bytes()),
        Slot::ScalarInt(s) => out.extend_from_slice(&s.borrow().to_le_bytes()),
        Slot::Vector(s) => put_f64s(&mut out, &s.borrow()),
        Slot::TimeHistory(s) => {
            let h = s.borrow();
            h.validate()?;
            out.extend_from_slice(&(h.order() as u32).to_le_bytes());
            out.extend_from_slice(&(h.len() as u64).to_le_bytes());
            out.extend_from_slice(&h.time.to_le_bytes());
            out.extend_from_slice(&h.dt.to_le_bytes());
            out.extend_from_slice(&h.step_index.to_le_bytes());
            for sol in &h.solutions {
                put_f64s(&mut out, sol);
            }
        }
    }
    Ok(out)
}

enum Decoded {
    Real(f64),
    Int(i64),
    Vector(Vec<f64>),
    History(TimeHistory),
}

fn decode_payload(name: &str, slot: &Slot, payload: &[u8]) -> Result<Decoded> {
    let mut r = Reader { buf: payload, pos: 0 };
    let schema = |msg: String| RestartError::Schema(format!("entry '{name}': {msg}"));
    let decoded = match slot {
        Slot::ScalarReal(_) => Decoded::Real(r.f64()?),
        Slot::ScalarInt(_) => Decoded::Int(r.u64()? as i64),
        Slot::Vector(s) => {
            let expected = s.borrow().len();
            if payload.len() != 8 * expected {
                return Err(schema(format!(
                    "payload of {} bytes, registry vector has {expected} values",
                    payload.len()
                )));
            }
            Decoded::Vector(r.f64s(expected)?)
        }
        Slot::TimeHistory(s) => {
            let (order, len) = {
                let h = s.borrow();
                (h.order(), h.len())
            };
            let file_order = r.u32()? as usize;
            let file_len = r.u64()? as usize;
            if file_order != order || file_len != len {
                return Err(schema(format!(
                    "file history has order {file_order} and length {file_len}, registry has order {order} and length {len}"
                )));
            }
            let time = r.f64()?;
            let dt = r.f64()?;
            let step_index = r.u64()?;
            let solutions = (0..order).map(|_| r.f64s(len)).collect::<Result<_>>()?;
            let h = TimeHistory {
                solutions,
                time,
                dt,
                step_index,
            };
            h.validate().map_err(|e| RestartError::Corruption(format!("entry '{name}': {e}")))?;
            Decoded::History(h)
        }
    };
    if r.pos != payload.len() {
        return Err(schema(format!("payload of {} bytes, expected {}", payload.len(), r.pos)));
    }
    Ok(decoded)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| RestartError::Corruption("declared length runs past the end of the data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Whether step `step` is a checkpoint under "every `every_n` steps".
/// Step 0 never is.
pub fn checkpoint_policy(every_n: i64, step: u64) -> Result<bool> {
    if every_n < 1 {
        return Err(RestartError::Contract(format!(
            "checkpoint interval must be at least 1, got {every_n}"
        )));
    }
    Ok(step > 0 && step.is_multiple_of(every_n as u64))
}

/// The `Serialization` subsection of a parameter file.
#[derive(Clone, Debug, PartialEq)]
pub struct SerializationParams {
    pub enable: bool,
    pub basename: String,
    pub every_n: i64,
}

impl SerializationParams {
    pub fn from_prm(tree: &ParamTree) -> Result<Self> {
        let p = SerializationParams {
            enable: tree.get_bool(&["Serialization", "Enable"])?,
            basename: tree.get_string(&["Serialization", "Serialization basename"])?.to_string(),
            every_n: tree.get_int(&["Serialization", "Serialize every n timesteps"])?,
        };
        checkpoint_policy(p.every_n, 0)?;
        Ok(p)
    }
}

/// The `Restart` subsection of a parameter file.
#[derive(Clone, Debug, PartialEq)]
pub struct RestartParams {
    pub enable: bool,
    pub basename: String,
    pub step_index: u64,
}

impl RestartParams {
    pub fn from_prm(tree: &ParamTree) -> Result<Self> {
        let step = tree.get_int(&["Restart", "Restart timestep index"])?;
        Ok(RestartParams {
            enable: tree.get_bool(&["Restart", "Enable"])?,
            basename: tree.get_string(&["Restart", "Restart basename"])?.to_string(),
            step_index: u64::try_from(step).map_err(|_| {
                RestartError::Contract(format!("restart step index must be non-negative, got {step}"))
            })?,
        })
    }
}

/// Deterministic exponential-decay stepper used to exercise checkpointing:
/// `u_{n+1} = u_n (1 - lambda dt)` on every component.
pub mod demo {
    use super::*;

    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct DecayStepper {
        pub lambda: f64,
    }

    impl DecayStepper {
        pub fn step(&self, h: &mut TimeHistory) {
            let factor = 1.0 - self.lambda * h.dt;
            let next = h.latest().iter().map(|u| u * factor).collect();
            h.advance(next);
        }

        /// Runs `steps` steps, calling `on_step` after each one.
        pub fn run(
            &self,
            h: &Shared<TimeHistory>,
            steps: u64,
            mut on_step: impl FnMut(u64) -> Result<()>,
        ) -> Result<()> {
            for _ in 0..steps {
                self.step(&mut h.borrow_mut());
                let k = h.borrow().step_index;
                on_step(k)?;
            }
            Ok(())
        }
    }

    /// Initial state of the demo: order-2 history of `n` values.
    pub fn initial_history(n: usize, dt: f64) -> Result<TimeHistory> {
        let u0: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / n as f64).collect();
        TimeHistory::new(2, u0, 0.0, dt)
    }

    /// Outcome of [`resume_equivalence`].
    #[derive(Clone, Debug)]
    pub struct DemoOutcome {
        pub checkpoint: PathBuf,
        pub checkpoint_bytes: usize,
        pub restart_info: RestartInfo,
        pub reference: TimeHistory,
        pub resumed: TimeHistory,
        /// Serializing the restored state reproduces the file byte for byte.
        pub round_trip_identical: bool,
        /// Every single-byte mutation of the checkpoint is rejected.
        pub corruption_detected: bool,
        /// Largest relative deviation from `u0 (1 - lambda dt)^n`.
        pub closed_form_error: f64,
    }

    impl DemoOutcome {
        pub fn bit_identical(&self) -> bool {
            self.reference.step_index == self.resumed.step_index
                && self.reference.time.to_bits() == self.resumed.time.to_bits()
                && self.reference.solutions.len() == self.resumed.solutions.len()
                && self
                    .reference
                    .solutions
                    .iter()
                    .zip(&self.resumed.solutions)
                    .all(|(a, b)| a.iter().map(|x| x.to_bits()).eq(b.iter().map(|x| x.to_bits())))
        }

        pub fn passed(&self) -> bool {
            self.bit_identical()
                && self.round_trip_identical
                && self.corruption_detected
                && self.closed_form_error <= 1e-12
        }
    }

    /// Settings of [`resume_equivalence`].
    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct DemoConfig {
        /// Number of values in the state vector.
        pub size: usize,
        pub dt: f64,
        pub stepper: DecayStepper,
        pub every_n: i64,
        /// Step at which the interrupted run is resumed.
        pub restart_step: u64,
        pub total_steps: u64,
    }

    impl Default for DemoConfig {
        fn default() -> Self {
            DemoConfig {
                size: 16,
                dt: 1e-3,
                stepper: DecayStepper { lambda: 0.5 },
                every_n: 1000,
                restart_step: 1000,
                total_steps: 2000,
            }
        }
    }

    /// Runs `total_steps` steps straight through, and separately
    /// `restart_step` steps with checkpoints under the policy, a restart
    /// from `restart_base` into fresh state, and the remaining steps.
    pub fn resume_equivalence(
        serialize_base: &Path,
        restart_base: &Path,
        cfg: &DemoConfig,
    ) -> Result<DemoOutcome> {
        checkpoint_policy(cfg.every_n, 0)?;
        if !checkpoint_policy(cfg.every_n, cfg.restart_step)? {
            return Err(RestartError::Contract(format!(
                "restart step {} is not a checkpoint under interval {}",
                cfg.restart_step, cfg.every_n
            )));
        }
        if cfg.total_steps < cfg.restart_step {
            return Err(RestartError::Contract(format!(
                "total steps {} precede the restart step {}",
                cfg.total_steps, cfg.restart_step
            )));
        }
        let stepper = cfg.stepper;
        let reference = shared(initial_history(cfg.size, cfg.dt)?);
        stepper.run(&reference, cfg.total_steps, |_| Ok(()))?;

        let first = shared(initial_history(cfg.size, cfg.dt)?);
        let mut reg = RestartRegistry::new();
        reg.attach_time_history("u", first.clone())?;
        let mut checkpoint = None;
        stepper.run(&first, cfg.restart_step, |k| {
            if checkpoint_policy(cfg.every_n, k)? {
                checkpoint = Some(reg.serialize(serialize_base, k)?);
            }
            Ok(())
        })?;
        let checkpoint = checkpoint.expect("policy fires at the restart step");

        // Fresh state of the right shape but different content.
        let mut blank = initial_history(cfg.size, cfg.dt)?;
        blank.solutions.iter_mut().for_each(|s| s.iter_mut().for_each(|x| *x = 0.0));
        let resumed = shared(blank);
        let mut fresh = RestartRegistry::new();
        fresh.attach_time_history("u", resumed.clone())?;
        let restart_info = fresh.restart(restart_base, cfg.restart_step)?;
        let bytes = std::fs::read(&checkpoint).map_err(|source| RestartError::Io {
            path: checkpoint.clone(),
            source,
        })?;
        let round_trip_identical = fresh.encode()? == bytes;
        let scratch = shared(initial_history(cfg.size, cfg.dt)?);
        let mut probe = RestartRegistry::new();
        probe.attach_time_history("u", scratch)?;
        let corruption_detected = (0..bytes.len()).all(|i| {
            let mut bad = bytes.clone();
            bad[i] ^= 0xff;
            probe.decode(&bad, cfg.restart_step).is_err()
        });
        stepper.run(&resumed, cfg.total_steps - restart_info.step_index, |_| Ok(()))?;

        let factor = (1.0 - stepper.lambda * cfg.dt).powi(cfg.total_steps as i32);
        let initial = initial_history(cfg.size, cfg.dt)?;
        let closed_form_error = resumed
            .borrow()
            .latest()
            .iter()
            .zip(initial.latest())
            .map(|(u, u0)| ((u - u0 * factor) / (u0 * factor)).abs())
            .fold(0.0, f64::max);

        let reference = reference.borrow().clone();
        let resumed = resumed.borrow().clone();
        Ok(DemoOutcome {
            checkpoint,
            checkpoint_bytes: bytes.len(),
            restart_info,
            reference,
            resumed,
            round_trip_identical,
            corruption_detected,
            closed_form_error,
        })
    }
}
