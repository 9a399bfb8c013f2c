use serde::Serialize;

use crate::error::{Error, Result};

/// Accumulated timings of one accelerator sub-module over all runs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct KernelProfile {
    pub name: String,
    pub transfer_ns: u64,
    pub invocation_ns: u64,
    pub execution_ns: u64,
    /// One-time engine construction, excluded from the percentages.
    pub engine_init_ns: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Breakdown {
    pub transfer: f64,
    pub invocation: f64,
    pub execution: f64,
}

impl Breakdown {
    fn of(transfer: u64, invocation: u64, execution: u64) -> Self {
        let total = (transfer + invocation + execution) as f64;
        if total == 0.0 {
            return Breakdown {
                transfer: 0.0,
                invocation: 0.0,
                execution: 100.0,
            };
        }
        Breakdown {
            transfer: 100.0 * transfer as f64 / total,
            invocation: 100.0 * invocation as f64 / total,
            execution: 100.0 * execution as f64 / total,
        }
    }

    pub fn sum(&self) -> f64 {
        self.transfer + self.invocation + self.execution
    }
}

impl KernelProfile {
    pub fn percent(&self) -> Breakdown {
        Breakdown::of(self.transfer_ns, self.invocation_ns, self.execution_ns)
    }

    pub fn recurring_ns(&self) -> u64 {
        self.transfer_ns + self.invocation_ns + self.execution_ns
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ProfileReport {
    pub kernels: Vec<KernelProfile>,
    pub aggregate_percent: Breakdown,
    /// Summed execution time of each host instruction, by plan index.
    #[serde(skip)]
    pub host_ns: Vec<u64>,
}

impl ProfileReport {
    pub fn kernel(&self, name: &str) -> Option<&KernelProfile> {
        self.kernels.iter().find(|k| k.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Default)]
pub(crate) struct Profiler {
    pub kernels: Vec<KernelProfile>,
    pub host_ns: Vec<u64>,
    pub runs: u64,
}

impl Profiler {
    pub fn kernel_mut(&mut self, name: &str) -> &mut KernelProfile {
        match self.kernels.iter().position(|k| k.name == name) {
            Some(i) => &mut self.kernels[i],
            None => {
                self.kernels.push(KernelProfile {
                    name: name.to_string(),
                    ..KernelProfile::default()
                });
                self.kernels.last_mut().unwrap()
            }
        }
    }

    pub fn report(&self) -> Result<ProfileReport> {
        if self.runs == 0 {
            return Err(Error::Runtime("no profile before the first run".into()));
        }
        let (t, i, e) = self.kernels.iter().fold((0, 0, 0), |(t, i, e), k| {
            (t + k.transfer_ns, i + k.invocation_ns, e + k.execution_ns)
        });
        Ok(ProfileReport {
            kernels: self.kernels.clone(),
            aggregate_percent: Breakdown::of(t, i, e),
            host_ns: self.host_ns.clone(),
        })
    }
}
