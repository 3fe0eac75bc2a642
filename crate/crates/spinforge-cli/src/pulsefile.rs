//! On-disk pulse format: one compiled gate with its phase waveform, metadata,
//! and the nominal fidelity it was compiled at.

use serde::{Deserialize, Serialize};

use spinforge_core::physics::{GateSpec, PulseSequence};

pub const PULSE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateAngles {
    pub gamma_deg: f64,
    pub theta_deg: f64,
    pub alpha_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseFile {
    pub schema_version: u32,
    pub gate: GateAngles,
    pub t_slices: usize,
    pub dt_ms: f64,
    pub amplitude_khz: f64,
    pub phases_rad: Vec<f64>,
    pub phases_deg: Vec<f64>,
    pub nominal_fidelity: f64,
    /// SHA-256 of the checkpoint file the pulse was compiled from.
    pub model_hash: String,
    /// Master seed recorded in that checkpoint.
    pub seed: u64,
}

impl PulseFile {
    pub fn new(
        gate: &GateSpec,
        pulse: &PulseSequence,
        nominal_fidelity: f64,
        model_hash: String,
        seed: u64,
    ) -> Self {
        Self {
            schema_version: PULSE_SCHEMA_VERSION,
            gate: GateAngles {
                gamma_deg: gate.gamma.to_degrees(),
                theta_deg: gate.theta.to_degrees(),
                alpha_deg: gate.alpha.to_degrees(),
            },
            t_slices: pulse.t_slices,
            dt_ms: pulse.dt,
            amplitude_khz: pulse.amplitude,
            phases_rad: pulse.phases.clone(),
            phases_deg: pulse.phases.iter().map(|p| p.to_degrees()).collect(),
            nominal_fidelity,
            model_hash,
            seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pulse serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self, String> {
        let pulse: PulseFile =
            serde_json::from_str(json).map_err(|e| format!("malformed pulse file: {e}"))?;
        if pulse.phases_rad.len() != pulse.t_slices || pulse.phases_deg.len() != pulse.t_slices {
            return Err("phase arrays disagree with t_slices".into());
        }
        for (r, d) in pulse.phases_rad.iter().zip(&pulse.phases_deg) {
            if (r.to_degrees() - d).abs() > 1e-9 {
                return Err("deg/rad phase arrays are inconsistent".into());
            }
        }
        Ok(pulse)
    }

    /// Flat companion table: `slice_index,phase_rad`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slice_index,phase_rad\n");
        for (i, p) in self.phases_rad.iter().enumerate() {
            out.push_str(&format!("{i},{p}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PulseFile {
        let gate = GateSpec::from_degrees(90.0, 90.0, 10.0);
        let pulse = PulseSequence::new(vec![0.1, -0.2, 0.3], 1.0, 0.01).unwrap();
        PulseFile::new(&gate, &pulse, 0.987654321, "abc123".into(), 7)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let p = sample();
        let json = p.to_json();
        let back = PulseFile::from_json(&json).unwrap();
        assert_eq!(p, back);
        assert_eq!(json, back.to_json());
    }

    #[test]
    fn inconsistent_arrays_rejected() {
        let mut p = sample();
        p.phases_deg[0] += 1.0;
        assert!(PulseFile::from_json(&p.to_json()).is_err());
        let mut p = sample();
        p.phases_rad.pop();
        assert!(PulseFile::from_json(&p.to_json()).is_err());
    }

    #[test]
    fn csv_shape() {
        let csv = sample().to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("slice_index,phase_rad\n0,0.1\n"));
        assert!(csv.ends_with("\n"));
    }
}
