//! Chain-spec JSON: `{"states": [...], "rates": [[from, to, rate], ...], "partition": {...}}`.

use serde::{Deserialize, Serialize};

use crate::chain::{build_chain, Chain};
use crate::error::{Error, Result};
use crate::partition::Partition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub valleys: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub states: Vec<String>,
    pub rates: Vec<(String, String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSpec>,
}

impl ChainSpec {
    pub fn from_chain(chain: &Chain, partition: Option<&Partition>) -> Self {
        Self {
            states: chain.labels().to_vec(),
            rates: chain
                .edges()
                .map(|(i, j, r)| (chain.label(i).to_string(), chain.label(j).to_string(), r))
                .collect(),
            partition: partition.map(|p| PartitionSpec::from_partition(chain, p)),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("chain spec: {e}")))
    }

    /// Builds the chain and, when present, the inline partition.
    pub fn build(&self) -> Result<(Chain, Option<Partition>)> {
        let chain = build_chain(&self.states, &self.rates)?;
        let partition = self
            .partition
            .as_ref()
            .map(|p| p.build(&chain))
            .transpose()?;
        Ok((chain, partition))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain specs always serialize")
    }
}

impl PartitionSpec {
    pub fn from_partition(chain: &Chain, partition: &Partition) -> Self {
        Self {
            valleys: partition.valley_labels(chain),
            delta: Some(partition.delta_labels(chain)),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("partition: {e}")))
    }

    pub fn build(&self, chain: &Chain) -> Result<Partition> {
        Partition::from_labels(chain, &self.valleys, self.delta.as_deref())
    }
}

/// Parses a chain spec and builds it.
pub fn read_chain_spec(text: &str) -> Result<(Chain, Option<Partition>)> {
    ChainSpec::parse(text)?.build()
}

/// Serializes a chain, and optionally a partition, as chain-spec JSON.
pub fn write_chain_spec(chain: &Chain, partition: Option<&Partition>) -> String {
    ChainSpec::from_chain(chain, partition).to_json()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::stationary;
    use crate::transforms::{collapse_chain, trace_chain};

    const BD3: &str = r#"{"states": ["1","2","3"],
        "rates": [["1","2",1.0],["2","1",1.0],["2","3",1.0],["3","2",1.0]],
        "partition": {"valleys": [["1"],["3"]], "delta": ["2"]}}"#;

    #[test]
    fn parses_inline_partition() {
        let (chain, partition) = read_chain_spec(BD3).unwrap();
        assert_eq!(chain.len(), 3);
        let p = partition.unwrap();
        assert_eq!(p.valley_count(), 2);
        assert_eq!(p.delta(), &[1]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(read_chain_spec("{"), Err(Error::Input(_))));
        assert!(matches!(
            read_chain_spec(r#"{"states":["a"],"rates":[],"x":1}"#),
            Err(Error::Input(_))
        ));
        let bad = r#"{"states":["a","b"],"rates":[["a","c",1.0]]}"#;
        assert!(matches!(read_chain_spec(bad), Err(Error::UnknownState(_))));
        let wrong_delta = r#"{"states":["1","2","3"],
            "rates":[["1","2",1.0],["2","1",1.0],["2","3",1.0],["3","2",1.0]],
            "partition":{"valleys":[["1"],["3"]],"delta":[]}}"#;
        assert!(read_chain_spec(wrong_delta).is_err());
    }

    #[test]
    fn derived_chains_round_trip_exactly() {
        let (chain, _) = read_chain_spec(BD3).unwrap();
        let pi = stationary(&chain).unwrap();
        let (traced, _) = trace_chain(&chain, &pi, &[0, 2]).unwrap();
        let collapsed = collapse_chain(&chain, &pi, &[0, 1]).unwrap();
        for c in [&chain, &traced, &collapsed.chain] {
            let (back, _) = read_chain_spec(&write_chain_spec(c, None)).unwrap();
            assert_eq!(&back, c);
        }
        let (c, p) = read_chain_spec(BD3).unwrap();
        let text = write_chain_spec(&c, p.as_ref());
        let (c2, p2) = read_chain_spec(&text).unwrap();
        assert_eq!((c, p), (c2, p2));
    }
}
