use proptest::prelude::*;
use reprompt_control::agents::{
    compose_feedback, expected_action, parse_action, render_prompt, validate_rule, AgentSpec,
    Proposal, TaskSpec, Thresholds,
};
use reprompt_control::plantio::{HeaterAction, PlantSample};

fn action() -> impl Strategy<Value = HeaterAction> {
    prop_oneof![Just(HeaterAction::On), Just(HeaterAction::Off)]
}

fn th() -> Thresholds {
    Thresholds::default()
}

proptest! {
    #[test]
    fn hysteresis_idempotent(t in 15.0f64..40.0, prev in action()) {
        let once = expected_action(t, prev, &th());
        prop_assert_eq!(expected_action(t, once, &th()), once);
    }

    #[test]
    fn out_of_band_ignores_prev(t in prop_oneof![15.0f64..24.999, 27.001f64..40.0]) {
        prop_assert_eq!(
            expected_action(t, HeaterAction::On, &th()),
            expected_action(t, HeaterAction::Off, &th())
        );
    }

    #[test]
    fn validator_consistency(t in 15.0f64..40.0, prev in action()) {
        let right = expected_action(t, prev, &th());
        prop_assert!(validate_rule(right, t, prev, &th()).passed);
        let wrong = validate_rule(right.opposite(), t, prev, &th());
        prop_assert!(!wrong.passed);
        prop_assert!(!wrong.reason.is_empty());
        prop_assert_eq!(wrong.expected, Some(right));
    }

    #[test]
    fn feedback_total_and_deterministic(t in 15.0f64..40.0, prev in action(), attempt in 1usize..5, unparseable in any::<bool>()) {
        let right = expected_action(t, prev, &th());
        let proposal = if unparseable { Proposal::Unparseable } else { Proposal::Action(right.opposite()) };
        let verdict = validate_rule(right.opposite(), t, prev, &th());
        let v = (!unparseable).then_some(&verdict);
        let a = compose_feedback(v, attempt, 4, t, prev, &proposal, &th()).unwrap();
        let b = compose_feedback(v, attempt, 4, t, prev, &proposal, &th()).unwrap();
        prop_assert_eq!(&a, &b);
        let attempt_tag = format!("attempt {attempt}/4");
        prop_assert!(a.contains(&attempt_tag));
        for hint in ["ACTION: ON", "ACTION: OFF"] {
            prop_assert!(a.contains(hint));
            prop_assert!(parse_action(hint).is_ok());
        }
    }

    #[test]
    fn rendered_prompt_has_no_placeholders(t in 0.0f64..60.0, prev in action(), fb in proptest::option::of("[a-z ]{0,20}")) {
        let spec = AgentSpec {
            name: "op".into(),
            role: "role".into(),
            goal: "goal".into(),
            backend: "b".into(),
            tools: vec![],
        };
        let task = TaskSpec {
            description_template: "{temperature} {prev_action} {low} {high} {feedback}".into(),
            expected_output_hint: "hint".into(),
        };
        let sample = PlantSample { timestamp: 0.0, t_sensor: t, applied: prev };
        let (sys, user) = render_prompt(&spec, &task, &sample, prev, &th(), fb.as_deref()).unwrap();
        for name in ["temperature", "prev_action", "low", "high", "feedback"] {
            let needle = format!("{{{name}}}");
            prop_assert!(!user.contains(&needle) && !sys.contains(&needle));
        }
    }

    #[test]
    fn parse_finds_last_action(noise in "[a-z .\n]{0,40}", first in action(), last in action()) {
        let text = format!("{noise}ACTION: {first}\n{noise} action :  {}\n", last.as_str().to_lowercase());
        prop_assert_eq!(parse_action(&text).unwrap(), last);
    }
}
