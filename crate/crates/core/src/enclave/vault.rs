//! Access-controlled asset store inside the enclave boundary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::lifecycle::LifecycleState;
use crate::IpId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    ChipId,
    PufExpectedResponse,
    ObfuscationVector,
    CommKey,
    LifecycleValidationKey { from: LifecycleState, to: LifecycleState },
    FirmwareSignature,
    ScanKey,
    LifecycleState,
    /// AMI session handle bound to the comm key.
    SessionId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AssetKey {
    pub kind: AssetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip: Option<IpId>,
}

impl AssetKey {
    pub fn chip(kind: AssetKind) -> Self {
        Self { kind, ip: None }
    }

    pub fn ip(kind: AssetKind, ip: IpId) -> Self {
        Self { kind, ip: Some(ip) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VaultError {
    #[error("missing asset {0:?}")]
    MissingAsset(AssetKey),
    #[error("corrupt asset {0:?}")]
    Corrupt(AssetKey),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StoredAsset {
    #[serde(flatten)]
    key: AssetKey,
    #[serde(with = "hex::serde")]
    value: Vec<u8>,
}

/// Serialises an asset map as a list so JSON needs no structured map keys.
pub(crate) mod asset_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<AssetKey, Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<StoredAsset> = map
            .iter()
            .map(|(k, v)| StoredAsset {
                key: k.clone(),
                value: v.clone(),
            })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<AssetKey, Vec<u8>>, D::Error> {
        let list = Vec::<StoredAsset>::deserialize(d)?;
        Ok(list.into_iter().map(|a| (a.key, a.value)).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetVault {
    #[serde(with = "asset_map")]
    entries: BTreeMap<AssetKey, Vec<u8>>,
}

impl AssetVault {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&mut self, key: AssetKey, value: impl Into<Vec<u8>>) {
        self.entries.insert(key, value.into());
    }

    pub fn fetch(&self, key: &AssetKey) -> Result<&[u8], VaultError> {
        self.entries
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| VaultError::MissingAsset(key.clone()))
    }

    pub fn fetch_array<const N: usize>(&self, key: &AssetKey) -> Result<[u8; N], VaultError> {
        self.fetch(key)?
            .try_into()
            .map_err(|_| VaultError::Corrupt(key.clone()))
    }

    pub fn contains(&self, key: &AssetKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn remove(&mut self, key: &AssetKey) -> Option<Vec<u8>> {
        self.entries.remove(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&AssetKey, &[u8])> {
        self.entries.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Erases every asset except the lifecycle state.
    pub fn purge_for_eol(&mut self) {
        self.entries.retain(|k, _| k.kind == AssetKind::LifecycleState);
    }

    pub fn lifecycle(&self) -> Result<LifecycleState, VaultError> {
        let key = AssetKey::chip(AssetKind::LifecycleState);
        let [code] = self.fetch_array::<1>(&key)?;
        LifecycleState::from_code(code).ok_or(VaultError::Corrupt(key))
    }

    pub fn set_lifecycle(&mut self, state: LifecycleState) {
        self.store(AssetKey::chip(AssetKind::LifecycleState), vec![state.code()]);
    }
}

pub fn vault_store(vault: &mut AssetVault, key: AssetKey, value: impl Into<Vec<u8>>) {
    vault.store(key, value)
}

pub fn vault_fetch<'a>(vault: &'a AssetVault, key: &AssetKey) -> Result<&'a [u8], VaultError> {
    vault.fetch(key)
}

pub fn vault_purge_for_eol(vault: &mut AssetVault) {
    vault.purge_for_eol()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_fetch_purge() {
        let mut v = AssetVault::new();
        v.store(AssetKey::chip(AssetKind::ChipId), vec![1; 32]);
        v.store(AssetKey::ip(AssetKind::ObfuscationVector, IpId::from("aes")), vec![2; 64]);
        v.set_lifecycle(LifecycleState::Recall);
        assert_eq!(vault_fetch(&v, &AssetKey::chip(AssetKind::ChipId)).unwrap(), &[1; 32][..]);
        vault_purge_for_eol(&mut v);
        assert_eq!(
            v.fetch(&AssetKey::chip(AssetKind::ChipId)),
            Err(VaultError::MissingAsset(AssetKey::chip(AssetKind::ChipId)))
        );
        assert_eq!(v.lifecycle(), Ok(LifecycleState::Recall));
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn serde_round_trip() {
        let mut v = AssetVault::new();
        v.store(
            AssetKey::chip(AssetKind::LifecycleValidationKey {
                from: LifecycleState::Deployment,
                to: LifecycleState::Recall,
            }),
            vec![7; 32],
        );
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<AssetVault>(&s).unwrap(), v);
    }
}
