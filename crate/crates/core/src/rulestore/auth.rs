use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use argon2::password_hash::rand_core::OsRng;
use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::{Algorithm, Argon2, Params, Version};
use chrono::{DateTime, Duration, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::atomic::{discard_stale_temp, replace_file};
use super::StoreError;

pub const DEFAULT_TOKEN_TTL: Duration = Duration::hours(12);

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock(Mutex::new(start))
    }

    pub fn advance(&self, by: Duration) {
        *self.0.lock().unwrap() += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

/// Argon2id cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashParams {
    pub memory_kib: u32,
    pub iterations: u32,
    pub parallelism: u32,
}

impl Default for HashParams {
    fn default() -> Self {
        HashParams {
            memory_kib: Params::DEFAULT_M_COST,
            iterations: Params::DEFAULT_T_COST,
            parallelism: Params::DEFAULT_P_COST,
        }
    }
}

impl HashParams {
    fn hasher(&self) -> Result<Argon2<'static>, StoreError> {
        let p = Params::new(self.memory_kib, self.iterations, self.parallelism, None)
            .map_err(|e| StoreError::Config(format!("argon2 parameters: {e}")))?;
        Ok(Argon2::new(Algorithm::Argon2id, Version::V0x13, p))
    }

    pub fn hash(&self, password: &str) -> Result<String, StoreError> {
        let salt = SaltString::generate(&mut OsRng);
        self.hasher()?
            .hash_password(password.as_bytes(), &salt)
            .map(|h| h.to_string())
            .map_err(|e| StoreError::Config(format!("argon2: {e}")))
    }
}

/// Public view of an account. The password hash is kept separately and never
/// leaves this module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScholarAccount {
    pub id: String,
    pub display_name: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct AccountRecord {
    #[serde(flatten)]
    account: ScholarAccount,
    password_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub scholar_id: String,
    pub expires_at: DateTime<Utc>,
}

pub(crate) struct Auth {
    path: PathBuf,
    accounts: RwLock<Vec<AccountRecord>>,
    /// sha256(token) -> (scholar id, expiry)
    sessions: Mutex<HashMap<[u8; 32], (String, DateTime<Utc>)>>,
    params: HashParams,
    ttl: Duration,
    clock: Arc<dyn Clock>,
    /// Verified against when the id is unknown, so both paths cost one hash.
    dummy_hash: String,
}

fn valid_id(id: &str) -> bool {
    (1..=64).contains(&id.len()) && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl Auth {
    pub fn open(path: &Path, params: HashParams, ttl: Duration, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        discard_stale_temp(path);
        let mut accounts = Vec::new();
        match fs::read_to_string(path) {
            Ok(text) => {
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let rec: AccountRecord = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                        path: path.to_owned(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                    accounts.push(rec);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(StoreError::Io(e)),
        }
        let dummy_hash = params.hash("placeholder password")?;
        Ok(Auth {
            path: path.to_owned(),
            accounts: RwLock::new(accounts),
            sessions: Mutex::new(HashMap::new()),
            params,
            ttl,
            clock,
            dummy_hash,
        })
    }

    pub fn add_account(&self, id: &str, display_name: &str, password: &str) -> Result<ScholarAccount, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::Malformed(format!("invalid scholar id `{id}`")));
        }
        if password.len() < 8 {
            return Err(StoreError::Malformed("password must be at least 8 characters".into()));
        }
        let mut accounts = self.accounts.write().unwrap();
        if accounts.iter().any(|a| a.account.id == id) {
            return Err(StoreError::DuplicateAccount(id.to_owned()));
        }
        let rec = AccountRecord {
            account: ScholarAccount {
                id: id.to_owned(),
                display_name: display_name.trim().to_owned(),
                created_at: self.clock.now(),
            },
            password_hash: self.params.hash(password)?,
        };
        let account = rec.account.clone();
        accounts.push(rec);
        let mut out = String::new();
        for a in accounts.iter() {
            out.push_str(&serde_json::to_string(a).expect("account serializes"));
            out.push('\n');
        }
        if let Err(e) = replace_file(&self.path, out.as_bytes(), None) {
            accounts.pop();
            return Err(StoreError::Io(e));
        }
        Ok(account)
    }

    pub fn accounts(&self) -> Vec<ScholarAccount> {
        self.accounts.read().unwrap().iter().map(|a| a.account.clone()).collect()
    }

    pub fn is_registered(&self, id: &str) -> bool {
        self.accounts.read().unwrap().iter().any(|a| a.account.id == id)
    }

    pub fn login(&self, id: &str, password: &str) -> Result<Session, StoreError> {
        let stored = self
            .accounts
            .read()
            .unwrap()
            .iter()
            .find(|a| a.account.id == id)
            .map(|a| a.password_hash.clone());
        let hash = stored.as_deref().unwrap_or(&self.dummy_hash);
        let parsed = PasswordHash::new(hash).map_err(|_| StoreError::BadCredentials)?;
        // argon2 compares digests in constant time
        let ok = Argon2::default().verify_password(password.as_bytes(), &parsed).is_ok();
        if !ok || stored.is_none() {
            return Err(StoreError::BadCredentials);
        }
        let mut raw = [0u8; 32];
        OsRng.fill_bytes(&mut raw);
        let token = hex::encode(raw);
        let expires_at = self.clock.now() + self.ttl;
        let mut sessions = self.sessions.lock().unwrap();
        let now = self.clock.now();
        sessions.retain(|_, (_, exp)| *exp > now);
        sessions.insert(Sha256::digest(token.as_bytes()).into(), (id.to_owned(), expires_at));
        Ok(Session {
            token,
            scholar_id: id.to_owned(),
            expires_at,
        })
    }

    /// Scholar id for a live token.
    pub fn authenticate(&self, token: &str) -> Result<String, StoreError> {
        let key: [u8; 32] = Sha256::digest(token.as_bytes()).into();
        let mut sessions = self.sessions.lock().unwrap();
        match sessions.get(&key) {
            Some((id, exp)) if *exp > self.clock.now() => Ok(id.clone()),
            Some(_) => {
                sessions.remove(&key);
                Err(StoreError::InvalidToken)
            }
            None => Err(StoreError::InvalidToken),
        }
    }
}
