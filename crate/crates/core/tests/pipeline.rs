use std::sync::Arc;

use async_trait::async_trait;
use chrono::{TimeZone, Utc};
use nutrilog_core::domain::{Modality, NutritionFacts, TimeWindow, UserId, UserProfile, nutrition_sum};
use nutrilog_core::gateway::{
    Gateway, Media, MockProvider, ModelProvider, ModelRequest, ProviderError, RetryPolicy, Role,
    Task,
};
use nutrilog_core::persistence::{LogQuery, MediaStore, Store};
use nutrilog_core::pipeline::{
    DraftState, Pipeline, PipelineConfig, PipelineError, SKIP_TOKEN,
};
use nutrilog_core::vector_store::{EmbeddingRow, VectorStore};
use parking_lot::Mutex;
use proptest::prelude::*;
use serde_json::json;

const DIM: usize = 8;

/// Mock provider that records requests and can fail embeddings.
struct Recording {
    inner: MockProvider,
    fail_embed: bool,
    seen: Mutex<Vec<ModelRequest>>,
}

#[async_trait]
impl ModelProvider for Recording {
    async fn complete(&self, request: &ModelRequest) -> Result<String, ProviderError> {
        self.seen.lock().push(request.clone());
        self.inner.complete(request).await
    }

    async fn embed(&self, media: &Media) -> Result<Vec<f64>, ProviderError> {
        if self.fail_embed {
            return Err(ProviderError::Refused("no embeddings today".into()));
        }
        self.inner.embed(media).await
    }
}

fn corpus(n: usize) -> VectorStore {
    let mut store = VectorStore::new(DIM).unwrap();
    let rows = (0..n).map(|i| {
        let mut vector = vec![0.1; DIM];
        vector[i % DIM] = 1.0 + i as f64;
        EmbeddingRow {
            food_id: format!("food_{i}"),
            vector,
            food_label: format!("food {i}"),
            nutrition: NutritionFacts {
                calories: 100.0 * (i + 1) as f64,
                protein: (i + 2) as f64,
                carbohydrates: (3 * i) as f64,
                fat: (i + 1) as f64,
                ..NutritionFacts::zero()
            },
        }
    });
    store.ingest(rows).unwrap();
    store
}

struct Harness {
    pipeline: Pipeline,
    provider: Arc<Recording>,
    user: UserId,
}

fn harness_with(config: PipelineConfig, rows: usize, fail_embed: bool) -> Harness {
    let provider = Arc::new(Recording {
        inner: MockProvider::new(DIM),
        fail_embed,
        seen: Mutex::new(Vec::new()),
    });
    let store = Arc::new(Store::open_migrated(None).unwrap());
    let gateway = Gateway::new(provider.clone()).with_retry(RetryPolicy::none());
    let fixed = Utc.with_ymd_and_hms(2024, 5, 2, 12, 30, 0).unwrap();
    let pipeline = Pipeline::new(
        store,
        MediaStore::in_memory(),
        gateway,
        Arc::new(corpus(rows)),
        config,
    )
    .with_clock(Arc::new(move || fixed));
    let user = UserId::new();
    let mut profile = UserProfile::new(user);
    profile.target_calories = Some(2200.0);
    pipeline.register_user(&profile).unwrap();
    Harness {
        pipeline,
        provider,
        user,
    }
}

fn harness() -> Harness {
    harness_with(PipelineConfig::default(), 6, false)
}

fn image(subject: &str) -> Media {
    Media::new("image/jpeg", format!("fixture:{subject}").into_bytes())
}

#[tokio::test]
async fn simple_text_is_ready_without_a_question() {
    let h = harness();
    let d = h
        .pipeline
        .start_log(h.user, Modality::Text, Media::text("banana"))
        .await
        .unwrap();
    assert_eq!(d.state, DraftState::Ready);
    assert_eq!(d.rag_hits.len(), 5);
    assert!(d.conversation.turns.is_empty());
    assert!(d.media_ref.is_none());
}

#[tokio::test]
async fn image_gets_a_question_and_stored_media() {
    let h = harness();
    let d = h
        .pipeline
        .start_log(h.user, Modality::Image, image("pizza"))
        .await
        .unwrap();
    assert_eq!(d.state, DraftState::AwaitingAnswer);
    assert_eq!(d.conversation.open_turn_count(), 1);
    assert_eq!(d.conversation.turns[0].options.len(), 10);
    let key = &d.media_ref.as_ref().unwrap().key;
    assert!(key.starts_with(&format!("media/{}/{}/", h.user, d.draft_id)));
    assert_eq!(h.pipeline.media().get_media(key).unwrap(), b"fixture:pizza");
}

#[tokio::test]
async fn audio_skips_retrieval_but_gets_receipts() {
    let h = harness();
    h.pipeline
        .ingest_receipt(h.user, &Media::text("# Store: Safeway\nRice, 1 bag\nBeans, 2 cans"))
        .await
        .unwrap();
    let d = h
        .pipeline
        .start_log(h.user, Modality::Audio, Media::new("audio/wav", b"fixture:rice and beans".to_vec()))
        .await
        .unwrap();
    assert!(d.rag_hits.is_empty());
    assert_eq!(d.receipt_context.len(), 2);
    let follow_up = h.provider.seen.lock().iter().rev().find(|r| r.task == Task::FollowUp).cloned().unwrap();
    assert!(follow_up.prompt_text.contains("- Rice (1 bag), from Safeway"));
}

#[tokio::test]
async fn answer_moves_to_ready_and_rejects_bad_select() {
    let h = harness();
    let d = h
        .pipeline
        .start_log(h.user, Modality::Image, image("curry"))
        .await
        .unwrap();
    let err = h.pipeline.answer_follow_up(d.draft_id, "maybe").await.unwrap_err();
    assert!(matches!(err, PipelineError::AnswerNotInOptions { .. }));
    let unchanged = h.pipeline.draft(d.draft_id).await.unwrap();
    assert_eq!(unchanged, d);

    let d = h.pipeline.answer_follow_up(d.draft_id, "yes").await.unwrap();
    assert_eq!(d.state, DraftState::Ready);
    assert_eq!(d.conversation.turns[0].answer.as_deref(), Some("yes"));
    assert!(matches!(
        h.pipeline.answer_follow_up(d.draft_id, "no").await,
        Err(PipelineError::WrongState { actual: DraftState::Ready, .. })
    ));
}

#[tokio::test]
async fn turn_cap_forces_ready() {
    let h = harness();
    let mut d = h
        .pipeline
        .start_log(h.user, Modality::Image, image("mystery stew"))
        .await
        .unwrap();
    for i in 0..3 {
        assert_eq!(d.state, DraftState::AwaitingAnswer, "turn {i}");
        d = h.pipeline.answer_follow_up(d.draft_id, "carrots").await.unwrap();
    }
    assert_eq!(d.state, DraftState::Ready);
    assert_eq!(d.conversation.turns.len(), 3);
    assert!(d.conversation.indices_contiguous());
}

#[tokio::test]
async fn single_hit_rag_grounds_the_log() {
    let config = PipelineConfig {
        rag_k: 1,
        ..PipelineConfig::default()
    };
    let h = harness_with(config, 6, false);
    let d = h
        .pipeline
        .start_log(h.user, Modality::Text, Media::text("banana"))
        .await
        .unwrap();
    assert_eq!(d.rag_hits.len(), 1);
    let log = h.pipeline.finalize_log(d.draft_id).await.unwrap();
    assert_eq!(log.nutrition, d.rag_hits[0].nutrition);
    assert_eq!(h.pipeline.store().get_log(log.log_id).unwrap(), log);
    assert_eq!(
        h.pipeline.draft(d.draft_id).await.unwrap().state,
        DraftState::Finalized
    );
}

#[tokio::test]
async fn finalize_requires_ready() {
    let h = harness();
    let d = h
        .pipeline
        .start_log(h.user, Modality::Image, image("pizza"))
        .await
        .unwrap();
    assert!(matches!(
        h.pipeline.finalize_log(d.draft_id).await,
        Err(PipelineError::WrongState {
            expected: DraftState::Ready,
            actual: DraftState::AwaitingAnswer
        })
    ));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn raced_finalizations_store_one_log() {
    let h = Arc::new(harness());
    for _ in 0..10 {
        let d = h
            .pipeline
            .start_log(h.user, Modality::Text, Media::text("banana"))
            .await
            .unwrap();
        let (a, b) = {
            let h1 = h.clone();
            let h2 = h.clone();
            let id = d.draft_id;
            tokio::join!(
                tokio::spawn(async move { h1.pipeline.finalize_log(id).await }),
                tokio::spawn(async move { h2.pipeline.finalize_log(id).await })
            )
        };
        let results = [a.unwrap(), b.unwrap()];
        assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
        assert!(results.iter().any(|r| matches!(
            r,
            Err(PipelineError::WrongState { actual: DraftState::Finalized, .. })
        )));
    }
    assert_eq!(h.pipeline.store().count_logs().unwrap(), 10);
}

#[tokio::test]
async fn receipt_ingestion() {
    let h = harness();
    let r = h
        .pipeline
        .ingest_receipt(
            h.user,
            &Media::text("# Store: Safeway\nChobani yogurt, 2\nBananas, 6\nSpinach, 1 bag\nTOTAL 14.20"),
        )
        .await
        .unwrap();
    assert_eq!(r.items.len(), 3);
    assert!(r.items.iter().all(|i| i.source == "Safeway"));
    assert!(!r.duplicate);
    let pantry = h
        .pipeline
        .store()
        .list_receipt_items(h.user, TimeWindow::all())
        .unwrap();
    assert_eq!(pantry.len(), 3);

    let empty = h.pipeline.ingest_receipt(h.user, &Media::text("")).await.unwrap();
    assert!(empty.items.is_empty());
    assert_eq!(
        h.pipeline.store().list_receipt_items(h.user, TimeWindow::all()).unwrap().len(),
        3
    );
    assert!(matches!(
        h.pipeline.ingest_receipt(UserId::new(), &Media::text("x")).await,
        Err(PipelineError::UnknownUser(_))
    ));
}

#[tokio::test]
async fn receipt_context_is_per_user() {
    let h = harness();
    let other = UserId::new();
    h.pipeline.register_user(&UserProfile::new(other)).unwrap();
    h.pipeline
        .ingest_receipt(other, &Media::text("# Store: Costco\nSalmon, 2 lb"))
        .await
        .unwrap();
    let d = h
        .pipeline
        .start_log(h.user, Modality::Image, image("salmon"))
        .await
        .unwrap();
    assert!(d.receipt_context.iter().all(|i| i.user_id == h.user));
    assert!(d.receipt_context.is_empty());
}

#[tokio::test]
async fn edit_and_delete() {
    let h = harness();
    let d = h
        .pipeline
        .start_log(h.user, Modality::Text, Media::text("banana"))
        .await
        .unwrap();
    let log = h.pipeline.finalize_log(d.draft_id).await.unwrap();

    let patch = json!({"calories": 250}).as_object().unwrap().clone();
    let edited = h.pipeline.edit_log(h.user, log.log_id, &patch).unwrap();
    assert!(edited.edited);
    assert_eq!(edited.nutrition.calories, 250.0);
    assert_eq!(edited.nutrition.protein, log.nutrition.protein);

    let bad = json!({"protein": -3}).as_object().unwrap().clone();
    assert!(matches!(
        h.pipeline.edit_log(h.user, log.log_id, &bad),
        Err(PipelineError::InvalidPatch(_))
    ));
    assert_eq!(h.pipeline.store().get_log(log.log_id).unwrap(), edited);

    assert!(matches!(
        h.pipeline.edit_log(UserId::new(), log.log_id, &patch),
        Err(PipelineError::UnknownLog(_))
    ));

    h.pipeline.delete_log(h.user, log.log_id).unwrap();
    let all = h.pipeline.store().all_logs(&LogQuery::for_user(h.user)).unwrap();
    assert_eq!(all.len(), 1);
    assert_eq!(nutrition_sum(&all, TimeWindow::all()), NutritionFacts::zero());
    assert!(matches!(
        h.pipeline.delete_log(h.user, log.log_id),
        Err(PipelineError::LogDeleted(_))
    ));
}

#[tokio::test]
async fn skip_is_recorded_but_left_out_of_the_transcript() {
    let h = harness();
    let d = h
        .pipeline
        .start_log(h.user, Modality::Image, image("mystery casserole"))
        .await
        .unwrap();
    let d = h.pipeline.answer_follow_up(d.draft_id, SKIP_TOKEN).await.unwrap();
    assert!(d.conversation.turns[0].skipped);
    let d = h.pipeline.answer_follow_up(d.draft_id, "tuna").await.unwrap();
    let d = h.pipeline.answer_follow_up(d.draft_id, "noodles").await.unwrap();
    assert_eq!(d.state, DraftState::Ready);
    let log = h.pipeline.finalize_log(d.draft_id).await.unwrap();

    let request = h
        .provider
        .seen
        .lock()
        .iter()
        .rev()
        .find(|r| r.task == Task::GenerateLog)
        .cloned()
        .unwrap();
    let answers: Vec<&str> = request
        .history
        .iter()
        .filter(|e| e.role == Role::User)
        .map(|e| e.text.as_str())
        .collect();
    assert_eq!(answers, ["tuna", "noodles"]);
    assert!(request.prompt_text.contains("Chat history:"));

    let stored = h
        .pipeline
        .store()
        .get_conversation(log.conversation_id.unwrap())
        .unwrap();
    assert_eq!(stored.turns.len(), 3);
    assert!(stored.turns[0].skipped);
}

#[tokio::test]
async fn embedding_failure_degrades_to_no_retrieval() {
    let h = harness_with(PipelineConfig::default(), 6, true);
    let d = h
        .pipeline
        .start_log(h.user, Modality::Image, image("pizza"))
        .await
        .unwrap();
    assert!(d.rag_hits.is_empty());
    assert_eq!(d.warnings.len(), 1);
    assert_eq!(d.state, DraftState::AwaitingAnswer);
}

#[tokio::test]
async fn in_flight_limit_and_abandon() {
    let h = harness();
    let mut drafts = Vec::new();
    for _ in 0..4 {
        drafts.push(
            h.pipeline
                .start_log(h.user, Modality::Image, image("pizza"))
                .await
                .unwrap(),
        );
    }
    assert!(matches!(
        h.pipeline.start_log(h.user, Modality::Image, image("pizza")).await,
        Err(PipelineError::TooManyDrafts { limit: 4 })
    ));
    let a = h.pipeline.abandon(drafts[0].draft_id).await.unwrap();
    assert_eq!(a.state, DraftState::Abandoned);
    assert!(h.pipeline.abandon(drafts[0].draft_id).await.is_err());
    assert!(h
        .pipeline
        .start_log(h.user, Modality::Image, image("pizza"))
        .await
        .is_ok());
}

#[tokio::test]
async fn preconditions() {
    let h = harness();
    assert!(matches!(
        h.pipeline.start_log(UserId::new(), Modality::Text, Media::text("x")).await,
        Err(PipelineError::UnknownUser(_))
    ));
    assert!(matches!(
        h.pipeline.start_log(h.user, Modality::Text, Media::text("  ")).await,
        Err(PipelineError::EmptyPayload)
    ));
    let mut bad = UserProfile::new(h.user);
    bad.weight_kg = Some(-5.0);
    assert!(matches!(
        h.pipeline.update_user(&bad),
        Err(PipelineError::InvalidProfile(_))
    ));
}

#[tokio::test]
async fn goals_edit_bumps_prompt_version() {
    let h = harness();
    let mut p = h.pipeline.store().get_user(h.user).unwrap();
    let before = h.pipeline.store().get_personalized_prompt(h.user).unwrap().unwrap();
    p.text_goals = "Eat more fiber".into();
    let after = h.pipeline.update_user(&p).unwrap();
    assert_eq!(after.goals_version, before.goals_version + 1);
    assert_eq!(h.pipeline.update_user(&p).unwrap().goals_version, after.goals_version);
}

async fn scripted_flow() -> serde_json::Value {
    let h = harness();
    h.pipeline
        .ingest_receipt(h.user, &Media::text("# Store: Safeway\nTortillas, 1 pack"))
        .await
        .unwrap();
    let d = h
        .pipeline
        .start_log(h.user, Modality::Image, image("burrito with beans"))
        .await
        .unwrap();
    let d = h.pipeline.answer_follow_up(d.draft_id, "rice and beans").await.unwrap();
    let log = h.pipeline.finalize_log(d.draft_id).await.unwrap();
    let mut v = serde_json::to_value(log.to_payload()).unwrap();
    v["modality"] = json!(log.modality.as_str());
    v["turns"] = json!(d.conversation.turns);
    v
}

#[tokio::test]
async fn flow_is_deterministic() {
    assert_eq!(scripted_flow().await, scripted_flow().await);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn at_most_one_open_turn(max_turns in 0usize..5, script in prop::collection::vec(0u8..3, 0..8)) {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async {
            let h = harness_with(PipelineConfig { max_turns, ..PipelineConfig::default() }, 6, false);
            let mut d = h.pipeline.start_log(h.user, Modality::Image, image("mystery soup")).await.unwrap();
            prop_assert!(d.conversation.open_turn_count() <= 1);
            for step in script {
                let answer = match step { 0 => SKIP_TOKEN, 1 => "onions", _ => "" };
                let before = d.clone();
                match h.pipeline.answer_follow_up(d.draft_id, answer).await {
                    Ok(next) => d = next,
                    Err(_) => prop_assert_eq!(&h.pipeline.draft(d.draft_id).await.unwrap(), &before),
                }
                prop_assert!(d.conversation.open_turn_count() <= 1);
                prop_assert!(d.conversation.turns.len() <= max_turns);
                prop_assert!(d.conversation.indices_contiguous());
                prop_assert_eq!(d.state == DraftState::AwaitingAnswer, d.conversation.open_turn_count() == 1);
            }
            Ok(())
        })?;
    }
}
