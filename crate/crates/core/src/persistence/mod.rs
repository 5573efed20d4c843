//! Relational storage on SQLite plus a content-addressed media store.
//!
//! Timestamps are stored as integer microseconds since the Unix epoch.
//! Conversations are stored one row per turn.

mod media;

use std::path::Path;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use rusqlite::{params, Connection, ErrorCode, OptionalExtension, Row};
use thiserror::Error;

use crate::domain::{
    AnswerType, Conversation, ConversationId, FoodEmbedding, FoodLog, FollowUpTurn, LogId,
    MealType, Modality, NutritionFacts, PersonalizedPrompt, ReceiptItem, TimeWindow, UserId,
    UserProfile,
};

pub use media::{
    media_key, FsObjectStore, MediaError, MediaRef, MediaStore, MemoryObjectStore, ObjectStore,
    DEFAULT_MEDIA_CAP_BYTES,
};

pub const SCHEMA_VERSION: u32 = 1;

const MIGRATIONS: [(u32, &str); 1] = [(1, include_str!("../../migrations/0001_init.sql"))];

/// Tables created by the migrations.
pub const TABLES: [&str; 8] = [
    "users",
    "food_logs",
    "receipt_items",
    "conversations",
    "food_embeddings",
    "personalized_prompts",
    "api_tokens",
    "schema_version",
];

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("database error: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("foreign-key violation: {0}")]
    ForeignKey(String),
    #[error("duplicate key: {0}")]
    Duplicate(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("store has schema version {found}, this build supports up to {supported}")]
    Downgrade { found: u32, supported: u32 },
    #[error("partially migrated store: tables {0:?} exist without a recorded version")]
    PartialMigration(Vec<String>),
    #[error("corrupt row: {0}")]
    Corrupt(String),
}

pub type Result<T> = std::result::Result<T, StorageError>;

fn classify(e: rusqlite::Error, what: &str) -> StorageError {
    if let rusqlite::Error::SqliteFailure(f, _) = &e {
        if f.code == ErrorCode::ConstraintViolation {
            return match f.extended_code {
                rusqlite::ffi::SQLITE_CONSTRAINT_FOREIGNKEY => StorageError::ForeignKey(what.into()),
                rusqlite::ffi::SQLITE_CONSTRAINT_PRIMARYKEY
                | rusqlite::ffi::SQLITE_CONSTRAINT_UNIQUE => StorageError::Duplicate(what.into()),
                _ => StorageError::Sqlite(e),
            };
        }
    }
    StorageError::Sqlite(e)
}

pub fn to_micros(t: DateTime<Utc>) -> i64 {
    t.timestamp_micros()
}

pub fn from_micros(us: i64) -> Result<DateTime<Utc>> {
    DateTime::from_timestamp_micros(us)
        .ok_or_else(|| StorageError::Corrupt(format!("timestamp {us} out of range")))
}

fn parse_col<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| StorageError::Corrupt(format!("bad {what} `{s}`")))
}

fn json_col<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| StorageError::Corrupt(format!("bad {what}: {e}")))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("value serializes")
}

/// Cursor for `(logged_at, log_id)` keyset pagination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogCursor {
    pub logged_at_micros: i64,
    pub log_id: LogId,
}

impl LogCursor {
    pub fn encode(&self) -> String {
        format!("{}_{}", self.logged_at_micros, self.log_id)
    }

    pub fn decode(s: &str) -> Option<Self> {
        let (t, id) = s.split_once('_')?;
        Some(LogCursor {
            logged_at_micros: t.parse().ok()?,
            log_id: id.parse().ok()?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LogQuery {
    pub user_id: Option<UserId>,
    pub window: TimeWindow,
    pub include_deleted: bool,
    pub after: Option<LogCursor>,
    pub limit: Option<usize>,
}

impl LogQuery {
    pub fn for_user(user_id: UserId) -> Self {
        LogQuery {
            user_id: Some(user_id),
            ..Self::everything()
        }
    }

    pub fn everything() -> Self {
        LogQuery {
            user_id: None,
            window: TimeWindow::all(),
            include_deleted: true,
            after: None,
            limit: None,
        }
    }

    pub fn window(mut self, window: TimeWindow) -> Self {
        self.window = window;
        self
    }
}

#[derive(Debug, Clone)]
pub struct LogPage {
    pub logs: Vec<FoodLog>,
    pub next_cursor: Option<LogCursor>,
}

/// Thread-safe handle to the relational store.
pub struct Store {
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Store")
    }
}

const LOG_COLUMNS: &str = "log_id, user_id, meal_name, ingredients, serving_size, meal_type, \
    logged_at, modality, media_ref, calories, protein, carbohydrates, fat, fiber, sugar, \
    saturated_fat, cholesterol, micronutrients, conversation_id, edited, deleted";

impl Store {
    pub fn open(path: &Path) -> Result<Self> {
        Self::wrap(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::wrap(Connection::open_in_memory()?)
    }

    fn wrap(conn: Connection) -> Result<Self> {
        conn.execute_batch("PRAGMA foreign_keys = ON; PRAGMA busy_timeout = 5000;")?;
        Ok(Store {
            conn: Mutex::new(conn),
        })
    }

    /// Opens and migrates in one step.
    pub fn open_migrated(path: Option<&Path>) -> Result<Self> {
        let store = match path {
            Some(p) => Self::open(p)?,
            None => Self::open_in_memory()?,
        };
        store.migrate()?;
        Ok(store)
    }

    /// Applies pending migrations and returns the resulting version.
    /// Re-running on a migrated store changes nothing.
    pub fn migrate(&self) -> Result<u32> {
        let mut conn = self.conn.lock();
        let current = read_version(&conn)?;
        match current {
            Some(v) if v > SCHEMA_VERSION => {
                return Err(StorageError::Downgrade {
                    found: v,
                    supported: SCHEMA_VERSION,
                })
            }
            Some(v) if v == SCHEMA_VERSION => return Ok(v),
            None => {
                let existing = existing_tables(&conn)?;
                if !existing.is_empty() {
                    return Err(StorageError::PartialMigration(existing));
                }
            }
            _ => {}
        }
        let from = current.unwrap_or(0);
        let tx = conn.transaction()?;
        tx.execute_batch("CREATE TABLE IF NOT EXISTS schema_version (version INTEGER NOT NULL);")?;
        for (version, sql) in MIGRATIONS.iter().filter(|(v, _)| *v > from) {
            tx.execute_batch(sql)?;
            tx.execute("DELETE FROM schema_version", [])?;
            tx.execute("INSERT INTO schema_version (version) VALUES (?1)", [version])?;
        }
        tx.commit()?;
        Ok(SCHEMA_VERSION)
    }

    pub fn schema_version(&self) -> Result<Option<u32>> {
        read_version(&self.conn.lock())
    }

    pub fn table_names(&self) -> Result<Vec<String>> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare(
            "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name",
        )?;
        let names = stmt
            .query_map([], |r| r.get(0))?
            .collect::<std::result::Result<Vec<String>, _>>()?;
        Ok(names)
    }

    /// Rows whose foreign keys do not resolve, as `(table, rowid)`.
    pub fn foreign_key_violations(&self) -> Result<Vec<(String, i64)>> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare("PRAGMA foreign_key_check")?;
        let rows = stmt
            .query_map([], |r| Ok((r.get(0)?, r.get::<_, Option<i64>>(1)?.unwrap_or(-1))))?
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(rows)
    }

    /// Cheap liveness probe.
    pub fn ping(&self) -> Result<()> {
        self.conn.lock().query_row("SELECT 1", [], |_| Ok(()))?;
        Ok(())
    }

    // ---- users -------------------------------------------------------

    pub fn insert_user(&self, user: &UserProfile) -> Result<()> {
        self.conn
            .lock()
            .execute(
                "INSERT INTO users (user_id, age, height_cm, weight_kg, target_calories, \
                 target_protein, target_water_ml, text_goals, tracking_history_months) \
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
                params![
                    user.user_id.to_string(),
                    user.age,
                    user.height_cm,
                    user.weight_kg,
                    user.target_calories,
                    user.target_protein,
                    user.target_water_ml,
                    user.text_goals,
                    user.tracking_history_months,
                ],
            )
            .map_err(|e| classify(e, &format!("user {}", user.user_id)))?;
        Ok(())
    }

    pub fn update_user(&self, user: &UserProfile) -> Result<()> {
        let n = self.conn.lock().execute(
            "UPDATE users SET age = ?2, height_cm = ?3, weight_kg = ?4, target_calories = ?5, \
             target_protein = ?6, target_water_ml = ?7, text_goals = ?8, \
             tracking_history_months = ?9 WHERE user_id = ?1",
            params![
                user.user_id.to_string(),
                user.age,
                user.height_cm,
                user.weight_kg,
                user.target_calories,
                user.target_protein,
                user.target_water_ml,
                user.text_goals,
                user.tracking_history_months,
            ],
        )?;
        if n == 0 {
            return Err(StorageError::NotFound(format!("user {}", user.user_id)));
        }
        Ok(())
    }

    pub fn get_user(&self, user_id: UserId) -> Result<UserProfile> {
        self.conn
            .lock()
            .query_row(
                "SELECT age, height_cm, weight_kg, target_calories, target_protein, \
                 target_water_ml, text_goals, tracking_history_months FROM users WHERE user_id = ?1",
                [user_id.to_string()],
                |r| {
                    Ok(UserProfile {
                        user_id,
                        age: r.get(0)?,
                        height_cm: r.get(1)?,
                        weight_kg: r.get(2)?,
                        target_calories: r.get(3)?,
                        target_protein: r.get(4)?,
                        target_water_ml: r.get(5)?,
                        text_goals: r.get(6)?,
                        tracking_history_months: r.get(7)?,
                    })
                },
            )
            .optional()?
            .ok_or_else(|| StorageError::NotFound(format!("user {user_id}")))
    }

    pub fn user_exists(&self, user_id: UserId) -> Result<bool> {
        Ok(self
            .conn
            .lock()
            .query_row(
                "SELECT 1 FROM users WHERE user_id = ?1",
                [user_id.to_string()],
                |_| Ok(()),
            )
            .optional()?
            .is_some())
    }

    pub fn list_users(&self) -> Result<Vec<UserProfile>> {
        let ids: Vec<String> = {
            let conn = self.conn.lock();
            let mut stmt = conn.prepare("SELECT user_id FROM users ORDER BY user_id")?;
            let ids = stmt
                .query_map([], |r| r.get(0))?
                .collect::<std::result::Result<_, _>>()?;
            ids
        };
        ids.iter()
            .map(|id| self.get_user(parse_col(id, "user id")?))
            .collect()
    }

    // ---- tokens ------------------------------------------------------

    pub fn insert_token(&self, token_hash: &str, user_id: UserId) -> Result<()> {
        self.conn
            .lock()
            .execute(
                "INSERT INTO api_tokens (token_hash, user_id) VALUES (?1, ?2)",
                params![token_hash, user_id.to_string()],
            )
            .map_err(|e| classify(e, "api token"))?;
        Ok(())
    }

    pub fn user_for_token(&self, token_hash: &str) -> Result<Option<UserId>> {
        let id: Option<String> = self
            .conn
            .lock()
            .query_row(
                "SELECT user_id FROM api_tokens WHERE token_hash = ?1",
                [token_hash],
                |r| r.get(0),
            )
            .optional()?;
        id.map(|s| parse_col(&s, "user id")).transpose()
    }

    // ---- personalized prompts -----------------------------------------

    /// Stores the prompt text. The version starts at 1 and increments only
    /// when the text differs from what is stored.
    pub fn upsert_personalized_prompt(
        &self,
        user_id: UserId,
        prompt_text: &str,
    ) -> Result<PersonalizedPrompt> {
        let mut conn = self.conn.lock();
        let tx = conn.transaction()?;
        let existing: Option<(String, u32)> = tx
            .query_row(
                "SELECT prompt_text, goals_version FROM personalized_prompts WHERE user_id = ?1",
                [user_id.to_string()],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?;
        let version = match existing {
            Some((text, v)) if text == prompt_text => v,
            Some((_, v)) => {
                tx.execute(
                    "UPDATE personalized_prompts SET prompt_text = ?2, goals_version = ?3 WHERE user_id = ?1",
                    params![user_id.to_string(), prompt_text, v + 1],
                )?;
                v + 1
            }
            None => {
                tx.execute(
                    "INSERT INTO personalized_prompts (user_id, prompt_text, goals_version) VALUES (?1, ?2, 1)",
                    params![user_id.to_string(), prompt_text],
                )
                .map_err(|e| classify(e, &format!("prompt for user {user_id}")))?;
                1
            }
        };
        tx.commit()?;
        Ok(PersonalizedPrompt {
            user_id,
            prompt_text: prompt_text.to_string(),
            goals_version: version,
        })
    }

    pub fn get_personalized_prompt(&self, user_id: UserId) -> Result<Option<PersonalizedPrompt>> {
        Ok(self
            .conn
            .lock()
            .query_row(
                "SELECT prompt_text, goals_version FROM personalized_prompts WHERE user_id = ?1",
                [user_id.to_string()],
                |r| {
                    Ok(PersonalizedPrompt {
                        user_id,
                        prompt_text: r.get(0)?,
                        goals_version: r.get(1)?,
                    })
                },
            )
            .optional()?)
    }

    // ---- food logs ---------------------------------------------------

    pub fn insert_log(&self, log: &FoodLog) -> Result<()> {
        insert_log_on(&self.conn.lock(), log)
    }

    /// Writes a log and its conversation turns in one transaction.
    pub fn insert_log_with_conversation(
        &self,
        log: &FoodLog,
        conversation: &Conversation,
    ) -> Result<()> {
        let mut conn = self.conn.lock();
        let tx = conn.transaction()?;
        insert_log_on(&tx, log)?;
        insert_turns_on(&tx, conversation.conversation_id, log.log_id, &conversation.turns)?;
        tx.commit()?;
        Ok(())
    }

    pub fn update_log(&self, log: &FoodLog) -> Result<()> {
        let n = self.conn.lock().execute(
            "UPDATE food_logs SET meal_name = ?2, ingredients = ?3, serving_size = ?4, \
             meal_type = ?5, logged_at = ?6, calories = ?7, protein = ?8, carbohydrates = ?9, \
             fat = ?10, fiber = ?11, sugar = ?12, saturated_fat = ?13, cholesterol = ?14, \
             micronutrients = ?15, edited = ?16, deleted = ?17 WHERE log_id = ?1",
            params![
                log.log_id.to_string(),
                log.meal_name,
                to_json(&log.ingredients),
                log.serving_size,
                log.meal_type.as_str(),
                to_micros(log.logged_at),
                log.nutrition.calories,
                log.nutrition.protein,
                log.nutrition.carbohydrates,
                log.nutrition.fat,
                log.nutrition.fiber,
                log.nutrition.sugar,
                log.nutrition.saturated_fat,
                log.nutrition.cholesterol,
                to_json(&log.nutrition.micronutrients),
                log.edited,
                log.deleted,
            ],
        )?;
        if n == 0 {
            return Err(StorageError::NotFound(format!("log {}", log.log_id)));
        }
        Ok(())
    }

    pub fn get_log(&self, log_id: LogId) -> Result<FoodLog> {
        let conn = self.conn.lock();
        let sql = format!("SELECT {LOG_COLUMNS} FROM food_logs WHERE log_id = ?1");
        let row = conn
            .query_row(&sql, [log_id.to_string()], RawLog::from_row)
            .optional()?;
        row.ok_or_else(|| StorageError::NotFound(format!("log {log_id}")))?
            .into_log()
    }

    /// Lists logs ordered by `(logged_at, log_id)`.
    pub fn list_logs(&self, query: &LogQuery) -> Result<LogPage> {
        let conn = self.conn.lock();
        let mut sql = format!(
            "SELECT {LOG_COLUMNS} FROM food_logs WHERE logged_at >= ?1 AND logged_at < ?2"
        );
        let mut args: Vec<rusqlite::types::Value> = vec![
            to_micros(query.window.from).into(),
            to_micros(query.window.to).into(),
        ];
        if let Some(user) = query.user_id {
            args.push(user.to_string().into());
            sql.push_str(&format!(" AND user_id = ?{}", args.len()));
        }
        if !query.include_deleted {
            sql.push_str(" AND deleted = 0");
        }
        if let Some(c) = &query.after {
            args.push(c.logged_at_micros.into());
            let t = args.len();
            args.push(c.log_id.to_string().into());
            let id = args.len();
            sql.push_str(&format!(
                " AND (logged_at > ?{t} OR (logged_at = ?{t} AND log_id > ?{id}))"
            ));
        }
        sql.push_str(" ORDER BY logged_at, log_id");
        if let Some(limit) = query.limit {
            sql.push_str(&format!(" LIMIT {}", limit + 1));
        }
        let mut stmt = conn.prepare(&sql)?;
        let raws = stmt
            .query_map(rusqlite::params_from_iter(args), RawLog::from_row)?
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut logs = raws
            .into_iter()
            .map(RawLog::into_log)
            .collect::<Result<Vec<_>>>()?;
        let next_cursor = match query.limit {
            Some(limit) if logs.len() > limit => {
                logs.truncate(limit);
                logs.last().map(|l| LogCursor {
                    logged_at_micros: to_micros(l.logged_at),
                    log_id: l.log_id,
                })
            }
            _ => None,
        };
        Ok(LogPage { logs, next_cursor })
    }

    /// Every log matching the query, following cursors internally.
    pub fn all_logs(&self, query: &LogQuery) -> Result<Vec<FoodLog>> {
        let mut q = query.clone();
        q.limit = None;
        Ok(self.list_logs(&q)?.logs)
    }

    pub fn count_logs(&self) -> Result<usize> {
        let n: i64 = self
            .conn
            .lock()
            .query_row("SELECT COUNT(*) FROM food_logs", [], |r| r.get(0))?;
        Ok(n as usize)
    }

    // ---- conversations ------------------------------------------------

    pub fn insert_conversation(&self, log_id: LogId, conversation: &Conversation) -> Result<()> {
        let mut conn = self.conn.lock();
        let tx = conn.transaction()?;
        insert_turns_on(&tx, conversation.conversation_id, log_id, &conversation.turns)?;
        tx.commit()?;
        Ok(())
    }

    pub fn get_conversation(&self, conversation_id: ConversationId) -> Result<Conversation> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare(
            "SELECT turn_index, log_id, question, answer_type, options, answer, skipped \
             FROM conversations WHERE conversation_id = ?1 ORDER BY turn_index",
        )?;
        let rows = stmt
            .query_map([conversation_id.to_string()], |r| {
                Ok((
                    r.get::<_, u32>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, String>(3)?,
                    r.get::<_, String>(4)?,
                    r.get::<_, Option<String>>(5)?,
                    r.get::<_, bool>(6)?,
                ))
            })?
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if rows.is_empty() {
            return Err(StorageError::NotFound(format!("conversation {conversation_id}")));
        }
        let mut log_id = None;
        let mut turns = Vec::with_capacity(rows.len());
        for (turn_index, lid, question, answer_type, options, answer, skipped) in rows {
            log_id = Some(parse_col(&lid, "log id")?);
            let answer_type = match answer_type.as_str() {
                "text" => AnswerType::Text,
                "select" => AnswerType::Select,
                other => return Err(StorageError::Corrupt(format!("answer type `{other}`"))),
            };
            turns.push(FollowUpTurn {
                turn_index,
                question,
                answer_type,
                options: json_col(&options, "options")?,
                answer,
                skipped,
            });
        }
        Ok(Conversation {
            conversation_id,
            log_id,
            turns,
            closed: true,
        })
    }

    /// Number of stored turns per log, for follow-up analytics.
    pub fn turn_counts(&self) -> Result<Vec<(LogId, usize)>> {
        let conn = self.conn.lock();
        let mut stmt =
            conn.prepare("SELECT log_id, COUNT(*) FROM conversations GROUP BY log_id ORDER BY log_id")?;
        let rows = stmt
            .query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?)))?
            .collect::<std::result::Result<Vec<_>, _>>()?;
        rows.into_iter()
            .map(|(id, n)| Ok((parse_col(&id, "log id")?, n as usize)))
            .collect()
    }

    /// Every stored question text, in (conversation, turn) order.
    pub fn all_questions(&self, user_id: Option<UserId>) -> Result<Vec<String>> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare(
            "SELECT c.question FROM conversations c JOIN food_logs l ON l.log_id = c.log_id \
             WHERE ?1 IS NULL OR l.user_id = ?1 ORDER BY l.logged_at, c.conversation_id, c.turn_index",
        )?;
        let rows = stmt
            .query_map([user_id.map(|u| u.to_string())], |r| r.get(0))?
            .collect::<std::result::Result<Vec<String>, _>>()?;
        Ok(rows)
    }

    // ---- receipts ----------------------------------------------------

    pub fn insert_receipt_items(&self, items: &[ReceiptItem], receipt_hash: &str) -> Result<()> {
        let mut conn = self.conn.lock();
        let tx = conn.transaction()?;
        for item in items {
            tx.execute(
                "INSERT INTO receipt_items (item_id, user_id, name, quantity, source, \
                 nutrition_summary, purchased_at, receipt_hash) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
                params![
                    item.item_id.to_string(),
                    item.user_id.to_string(),
                    item.name,
                    item.quantity,
                    item.source,
                    to_json(&item.nutrition_summary),
                    to_micros(item.purchased_at),
                    receipt_hash,
                ],
            )
            .map_err(|e| classify(e, &format!("receipt item {}", item.item_id)))?;
        }
        tx.commit()?;
        Ok(())
    }

    pub fn receipt_seen(&self, user_id: UserId, receipt_hash: &str) -> Result<bool> {
        Ok(self
            .conn
            .lock()
            .query_row(
                "SELECT 1 FROM receipt_items WHERE user_id = ?1 AND receipt_hash = ?2 LIMIT 1",
                params![user_id.to_string(), receipt_hash],
                |_| Ok(()),
            )
            .optional()?
            .is_some())
    }

    /// A user's items purchased inside `window`, oldest first.
    pub fn list_receipt_items(&self, user_id: UserId, window: TimeWindow) -> Result<Vec<ReceiptItem>> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare(
            "SELECT item_id, name, quantity, source, nutrition_summary, purchased_at \
             FROM receipt_items WHERE user_id = ?1 AND purchased_at >= ?2 AND purchased_at < ?3 \
             ORDER BY purchased_at, rowid",
        )?;
        let rows = stmt
            .query_map(
                params![
                    user_id.to_string(),
                    to_micros(window.from),
                    to_micros(window.to)
                ],
                |r| {
                    Ok((
                        r.get::<_, String>(0)?,
                        r.get::<_, String>(1)?,
                        r.get::<_, String>(2)?,
                        r.get::<_, String>(3)?,
                        r.get::<_, String>(4)?,
                        r.get::<_, i64>(5)?,
                    ))
                },
            )?
            .collect::<std::result::Result<Vec<_>, _>>()?;
        rows.into_iter()
            .map(|(id, name, quantity, source, nutrition, at)| {
                Ok(ReceiptItem {
                    item_id: parse_col(&id, "item id")?,
                    user_id,
                    name,
                    quantity,
                    source,
                    nutrition_summary: json_col(&nutrition, "nutrition")?,
                    purchased_at: from_micros(at)?,
                })
            })
            .collect()
    }

    // ---- embeddings --------------------------------------------------

    pub fn upsert_embeddings(&self, rows: &[FoodEmbedding]) -> Result<()> {
        let mut conn = self.conn.lock();
        let tx = conn.transaction()?;
        for row in rows {
            let blob: Vec<u8> = row
                .vector
                .iter()
                .flat_map(|x| (*x as f32).to_le_bytes())
                .collect();
            tx.execute(
                "INSERT INTO food_embeddings (food_id, food_label, dim, vector, nutrition) \
                 VALUES (?1, ?2, ?3, ?4, ?5) ON CONFLICT(food_id) DO UPDATE SET \
                 food_label = excluded.food_label, dim = excluded.dim, vector = excluded.vector, \
                 nutrition = excluded.nutrition",
                params![
                    row.food_id,
                    row.food_label,
                    row.vector.len() as i64,
                    blob,
                    to_json(&row.nutrition)
                ],
            )?;
        }
        tx.commit()?;
        Ok(())
    }

    pub fn load_embeddings(&self) -> Result<Vec<FoodEmbedding>> {
        let conn = self.conn.lock();
        let mut stmt = conn.prepare(
            "SELECT food_id, food_label, dim, vector, nutrition FROM food_embeddings ORDER BY food_id",
        )?;
        let rows = stmt
            .query_map([], |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, i64>(2)?,
                    r.get::<_, Vec<u8>>(3)?,
                    r.get::<_, String>(4)?,
                ))
            })?
            .collect::<std::result::Result<Vec<_>, _>>()?;
        rows.into_iter()
            .map(|(food_id, food_label, dim, blob, nutrition)| {
                if blob.len() != dim as usize * 4 {
                    return Err(StorageError::Corrupt(format!(
                        "embedding {food_id} has {} bytes for dim {dim}",
                        blob.len()
                    )));
                }
                Ok(FoodEmbedding {
                    vector: blob
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                        .collect(),
                    food_id,
                    food_label,
                    nutrition: json_col(&nutrition, "nutrition")?,
                })
            })
            .collect()
    }
}

fn read_version(conn: &Connection) -> Result<Option<u32>> {
    let has_table: bool = conn
        .query_row(
            "SELECT 1 FROM sqlite_master WHERE type = 'table' AND name = 'schema_version'",
            [],
            |_| Ok(()),
        )
        .optional()?
        .is_some();
    if !has_table {
        return Ok(None);
    }
    Ok(conn
        .query_row("SELECT MAX(version) FROM schema_version", [], |r| {
            r.get::<_, Option<u32>>(0)
        })?)
}

fn existing_tables(conn: &Connection) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for table in TABLES {
        let present = conn
            .query_row(
                "SELECT 1 FROM sqlite_master WHERE type = 'table' AND name = ?1",
                [table],
                |_| Ok(()),
            )
            .optional()?
            .is_some();
        if present {
            out.push(table.to_string());
        }
    }
    Ok(out)
}

fn insert_log_on(conn: &Connection, log: &FoodLog) -> Result<()> {
    conn.execute(
        &format!(
            "INSERT INTO food_logs ({LOG_COLUMNS}) VALUES \
             (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15, ?16, ?17, ?18, ?19, ?20, ?21)"
        ),
        params![
            log.log_id.to_string(),
            log.user_id.to_string(),
            log.meal_name,
            to_json(&log.ingredients),
            log.serving_size,
            log.meal_type.as_str(),
            to_micros(log.logged_at),
            log.modality.as_str(),
            log.media_ref,
            log.nutrition.calories,
            log.nutrition.protein,
            log.nutrition.carbohydrates,
            log.nutrition.fat,
            log.nutrition.fiber,
            log.nutrition.sugar,
            log.nutrition.saturated_fat,
            log.nutrition.cholesterol,
            to_json(&log.nutrition.micronutrients),
            log.conversation_id.map(|c| c.to_string()),
            log.edited,
            log.deleted,
        ],
    )
    .map_err(|e| classify(e, &format!("log {} for user {}", log.log_id, log.user_id)))?;
    Ok(())
}

fn insert_turns_on(
    conn: &Connection,
    conversation_id: ConversationId,
    log_id: LogId,
    turns: &[FollowUpTurn],
) -> Result<()> {
    for turn in turns {
        conn.execute(
            "INSERT INTO conversations (conversation_id, turn_index, log_id, question, \
             answer_type, options, answer, skipped) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
            params![
                conversation_id.to_string(),
                turn.turn_index,
                log_id.to_string(),
                turn.question,
                turn.answer_type.as_str(),
                to_json(&turn.options),
                turn.answer,
                turn.skipped,
            ],
        )
        .map_err(|e| classify(e, &format!("conversation {conversation_id} turn {}", turn.turn_index)))?;
    }
    Ok(())
}

struct RawLog {
    log_id: String,
    user_id: String,
    meal_name: String,
    ingredients: String,
    serving_size: String,
    meal_type: String,
    logged_at: i64,
    modality: String,
    media_ref: Option<String>,
    scalars: [f64; 7],
    saturated_fat: Option<f64>,
    micronutrients: String,
    conversation_id: Option<String>,
    edited: bool,
    deleted: bool,
}

impl RawLog {
    fn from_row(r: &Row<'_>) -> rusqlite::Result<Self> {
        Ok(RawLog {
            log_id: r.get(0)?,
            user_id: r.get(1)?,
            meal_name: r.get(2)?,
            ingredients: r.get(3)?,
            serving_size: r.get(4)?,
            meal_type: r.get(5)?,
            logged_at: r.get(6)?,
            modality: r.get(7)?,
            media_ref: r.get(8)?,
            scalars: [
                r.get(9)?,
                r.get(10)?,
                r.get(11)?,
                r.get(12)?,
                r.get(13)?,
                r.get(14)?,
                r.get(16)?,
            ],
            saturated_fat: r.get(15)?,
            micronutrients: r.get(17)?,
            conversation_id: r.get(18)?,
            edited: r.get(19)?,
            deleted: r.get(20)?,
        })
    }

    fn into_log(self) -> Result<FoodLog> {
        let [calories, protein, carbohydrates, fat, fiber, sugar, cholesterol] = self.scalars;
        Ok(FoodLog {
            log_id: parse_col(&self.log_id, "log id")?,
            user_id: parse_col(&self.user_id, "user id")?,
            meal_name: self.meal_name,
            ingredients: json_col(&self.ingredients, "ingredients")?,
            serving_size: self.serving_size,
            meal_type: parse_col::<MealType>(&self.meal_type, "meal type")?,
            logged_at: from_micros(self.logged_at)?,
            modality: parse_col::<Modality>(&self.modality, "modality")?,
            media_ref: self.media_ref,
            nutrition: NutritionFacts {
                calories,
                protein,
                carbohydrates,
                fat,
                fiber,
                sugar,
                saturated_fat: self.saturated_fat,
                cholesterol,
                micronutrients: json_col(&self.micronutrients, "micronutrients")?,
            },
            conversation_id: self
                .conversation_id
                .map(|c| parse_col(&c, "conversation id"))
                .transpose()?,
            edited: self.edited,
            deleted: self.deleted,
        })
    }
}
