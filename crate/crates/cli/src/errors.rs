//! Exit-code mapping. The contract: 0 success, 2 missing or unreadable
//! input, 3 shape or format mismatch, 4 file-pairing errors.

use nucleopipe::classify::ClassifyError;
use nucleopipe::config::ConfigError;
use nucleopipe::instseg::SegError;
use nucleopipe::losses::LossError;
use nucleopipe::maps::MapError;
use nucleopipe::metrics::MetricError;
use nucleopipe::network::NetworkError;
use nucleopipe::synth::SynthError;
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Exit 2: a referenced input does not exist or cannot be read.
    Missing(String),
    /// Exit 3: malformed file, shape mismatch, or invalid configuration.
    Format(String),
    /// Exit 4: gt/pred directories do not pair up.
    Pairing(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Missing(_) => 2,
            CliError::Format(_) => 3,
            CliError::Pairing(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Missing(msg) => write!(f, "missing input: {msg}"),
            CliError::Format(msg) => write!(f, "{msg}"),
            CliError::Pairing(orphans) => {
                writeln!(f, "unpaired files:")?;
                for orphan in orphans {
                    writeln!(f, "  {orphan}")?;
                }
                Ok(())
            }
        }
    }
}

impl From<MapError> for CliError {
    fn from(e: MapError) -> Self {
        match e {
            MapError::Io(io) => CliError::Missing(io.to_string()),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Map(inner) => inner.into(),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<SegError> for CliError {
    fn from(e: SegError) -> Self {
        match e {
            SegError::Map(inner) => inner.into(),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Map(inner) => inner.into(),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Map(inner) => inner.into(),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Map(inner) => inner.into(),
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Format(format!("config: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Missing(e.to_string())
    }
}
