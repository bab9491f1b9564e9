use std::sync::mpsc;
use std::sync::{Arc, RwLock};

use prefclm::dsl::EvalProgram;
use prefclm::envs::EnvSpec;
use prefclm::gateway::http_requests_sent;
use prefclm::model::{FusionMode, LabelSource, Preference, RunConfig, TeacherKind};
use prefclm::pbrl::{
    load_run_dir, run_experiment, Command, Phase, Run, RunError, RunOptions, RunSnapshot, TicketStatus,
};
use prefclm::teachers::crowd_label;

fn small(teacher: TeacherKind) -> RunConfig {
    RunConfig {
        teacher_kind: teacher,
        fusion_mode: if teacher == TeacherKind::CrowdMajority {
            FusionMode::Majority
        } else {
            FusionMode::Dst
        },
        total_env_steps: 4_000,
        warmup_steps: 1_000,
        query_interval: 500,
        query_budget: 40,
        reward_epochs: 10,
        ..RunConfig::default()
    }
}

fn program(src: &str) -> EvalProgram {
    EvalProgram::parse_for(&EnvSpec::grid_walker(), src).unwrap()
}

/// Labels of every labeled query, by id.
fn labels(run: &Run) -> Vec<(u64, Preference)> {
    run.buffer().labeled().map(|q| (q.query_id, q.label.unwrap())).collect()
}

#[test]
fn identical_configs_give_identical_runs() {
    for teacher in [TeacherKind::Oracle, TeacherKind::CrowdDst, TeacherKind::CrowdMajority] {
        let cfg = small(teacher);
        let a = run_experiment(&cfg, RunOptions::default()).unwrap();
        let b = run_experiment(&cfg, RunOptions::default()).unwrap();
        assert_eq!(a.curve_csv, b.curve_csv, "{teacher:?}");
        assert_eq!(a.state, b.state);
    }
    let other = RunConfig {
        seed: 1,
        ..small(TeacherKind::Oracle)
    };
    let a = run_experiment(&small(TeacherKind::Oracle), RunOptions::default()).unwrap();
    let b = run_experiment(&other, RunOptions::default()).unwrap();
    assert_ne!(a.curve_csv, b.curve_csv);
}

#[test]
fn stub_crowd_never_touches_the_network() {
    run_experiment(&small(TeacherKind::CrowdDst), RunOptions::default()).unwrap();
    assert_eq!(http_requests_sent(), 0);
}

#[test]
fn budget_caps_answered_queries() {
    // Rounds at 1000, 1500, ..., 3500: six rounds of up to ten.
    for (budget, want) in [(0, 0), (7, 7), (40, 40), (60, 60), (500, 60)] {
        let cfg = RunConfig {
            query_budget: budget,
            ..small(TeacherKind::Oracle)
        };
        let mut run = Run::new(&cfg, RunOptions::default()).unwrap();
        let state = run.run_to_end().unwrap();
        assert_eq!(state.queries_used, want, "budget {budget}");
        assert_eq!(run.buffer().labeled_count(), want);
        for p in &state.curve {
            assert!(p.queries_used <= budget);
        }
        // Non-decreasing along the curve.
        assert!(state.curve.windows(2).all(|w| w[0].queries_used <= w[1].queries_used));
    }
}

#[test]
fn skipped_queries_do_not_spend_budget() {
    let cfg = RunConfig {
        teacher_kind: TeacherKind::Scripted,
        // Every pair gap is below this, so the teacher skips everything.
        skip_threshold: 1e9,
        ..small(TeacherKind::Oracle)
    };
    let out = run_experiment(&cfg, RunOptions::default()).unwrap();
    assert_eq!(out.state.queries_used, 0);
    assert_eq!(out.state.queries_skipped, 60);
    assert_eq!(out.state.reward_updates, 0);
}

#[test]
fn queries_stop_at_budget_but_training_runs_to_the_step_limit() {
    let cfg = RunConfig {
        query_budget: 10,
        ..small(TeacherKind::Oracle)
    };
    let out = run_experiment(&cfg, RunOptions::default()).unwrap();
    assert_eq!(out.state.env_steps, 4_000);
    assert_eq!(out.state.curve.last().unwrap().env_steps, 4_000);
    assert_eq!(out.state.queries_used, 10);
    // One round of labels, one retrain.
    assert_eq!(out.state.reward_updates, 1);
}

fn crowd_run_at_training() -> Run {
    let mut run = Run::new(&small(TeacherKind::CrowdDst), RunOptions::default()).unwrap();
    run.advance_to(2_500).unwrap();
    assert_eq!(run.state().phase, Phase::Training);
    assert!(run.buffer().labeled_count() > 0);
    run
}

#[test]
fn refinement_relabels_every_stored_label_from_the_new_pool() {
    let mut run = crowd_run_at_training();
    let pool = vec![program("return -dist_goal_last"), program("return mean(velocity) - progress(dist_goal)")];
    let version = run.apply_refinement(pool.clone()).unwrap();
    assert_eq!(version, 1);
    let n = run.buffer().labeled_count();
    assert!(n > 0);
    for q in run.buffer().labeled() {
        let want = crowd_label(&q.seg0, &q.seg1, &pool, 0.3, FusionMode::Dst).unwrap();
        assert_eq!(q.label, Some(want), "query {}", q.query_id);
        assert_eq!(q.label_source, Some(LabelSource::Crowd));
    }
    // Fresh ensemble retrained on the new labels.
    assert!(run.state().reward_updates >= 1);
    run.run_to_end().unwrap();
    assert_eq!(run.state().error, None);
    assert_eq!(run.state().curve.last().unwrap().functions_version, 1);
}

#[test]
fn order_inverting_pool_flips_every_strict_label() {
    for mode in [TeacherKind::CrowdDst, TeacherKind::CrowdMajority] {
        let mut run = Run::new(&small(mode), RunOptions::default()).unwrap();
        run.advance_to(2_500).unwrap();
        run.apply_refinement(vec![program("return sum(dist_goal) + sum(velocity)")]).unwrap();
        let before = labels(&run);
        run.apply_refinement(vec![program("return -(sum(dist_goal) + sum(velocity))")]).unwrap();
        let after = labels(&run);
        assert_eq!(before.len(), after.len());
        let mut strict = 0;
        for ((id, a), (id2, b)) in before.iter().zip(&after) {
            assert_eq!(id, id2);
            assert_eq!(*b, a.flip(), "query {id}");
            strict += usize::from(*a != Preference::Equal);
        }
        assert!(strict > 0);
        assert_eq!(run.state().functions_version, 2);
    }
}

#[test]
fn identical_pool_still_bumps_the_version() {
    let mut run = crowd_run_at_training();
    let pool = run.teacher().pool().unwrap().as_ref().clone();
    let before = labels(&run);
    assert_eq!(run.apply_refinement(pool.clone()).unwrap(), 1);
    assert_eq!(labels(&run), before);
    assert_eq!(run.apply_refinement(pool).unwrap(), 2);
    assert_eq!(labels(&run), before);
}

#[test]
fn refine_with_stub_feedback() {
    let mut run = crowd_run_at_training();
    let v = run.refine("move slower near the goal").unwrap();
    assert_eq!(v, 1);
    let pool = run.teacher().pool().unwrap();
    assert!(pool.iter().any(|p| p.source.contains("velocity")));
    assert!(pool.iter().all(|p| p.version == 1 || p.version == 0));
}

#[test]
fn refinement_errors() {
    let mut oracle = Run::new(&small(TeacherKind::Oracle), RunOptions::default()).unwrap();
    oracle.advance_to(1_500).unwrap();
    assert!(matches!(oracle.refine("x"), Err(RunError::Refinement(_))));

    let mut run = crowd_run_at_training();
    assert!(matches!(run.apply_refinement(vec![]), Err(RunError::Refinement(_))));
    // A program for another feature schema cannot label this buffer.
    let wrong = EvalProgram::parse_for(&EnvSpec::button_grid(), "return mean(pressed)").unwrap();
    let before = labels(&run);
    assert!(matches!(run.apply_refinement(vec![wrong]), Err(RunError::Refinement(_))));
    assert_eq!(labels(&run), before);
    assert_eq!(run.state().functions_version, 0);
    assert_eq!(run.state().phase, Phase::Training);
}

#[test]
fn commands_drive_a_running_loop() {
    let (tx, rx) = mpsc::channel();
    let snap = Arc::new(RwLock::new(RunSnapshot::default()));
    let cfg = RunConfig {
        teacher_kind: TeacherKind::Human,
        ..small(TeacherKind::Oracle)
    };
    let opts = RunOptions {
        commands: Some(rx),
        snapshot: Some(snap.clone()),
        ..Default::default()
    };
    let mut run = Run::new(&cfg, opts).unwrap();
    run.advance_to(1_000).unwrap();
    let pending = snap.read().unwrap().pending.clone();
    assert_eq!(pending.len(), 10);
    assert!(pending.iter().all(|p| snap.read().unwrap().segments.contains_key(&p.seg0.segment_id)));

    for p in &pending[..4] {
        tx.send(Command::Label {
            query_id: p.query_id,
            value: Preference::First,
        })
        .unwrap();
    }
    tx.send(Command::Refine {
        ticket: 7,
        feedback: "faster".into(),
    })
    .unwrap();
    tx.send(Command::Stop).unwrap();
    let state = run.run_to_end().unwrap();
    assert!(state.env_steps < 4_000);
    assert_eq!(run.buffer().labeled_count(), 4);
    let snap = snap.read().unwrap();
    assert_eq!(snap.state.phase, Phase::Done);
    assert!(matches!(snap.tickets.get(&7), Some(TicketStatus::Failed { .. })));
    assert_eq!(snap.command_log.len(), 6);
    assert!(snap.command_log.last().unwrap().ends_with("stop"));
}

#[test]
fn run_directory_contents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(TeacherKind::CrowdDst);
    let opts = RunOptions {
        run_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let out = run_experiment(&cfg, opts).unwrap();
    for f in ["config.json", "curve.csv", "buffer.json", "ensemble.json", "state.json", "pool_v0.evl"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert_eq!(csv, out.curve_csv);
    let (cfg2, state) = load_run_dir(dir.path()).unwrap();
    assert_eq!(cfg2, cfg);
    assert_eq!(state, out.state);
}
