//! Runs every example so they stay in step with the library.

trait Outcome {
    fn check(self);
}

impl Outcome for () {
    fn check(self) {}
}

impl<E: std::fmt::Debug> Outcome for Result<(), E> {
    fn check(self) {
        self.expect("example failed");
    }
}

macro_rules! example {
    ($name:ident) => {
        mod $name {
            #![allow(dead_code)]
            include!(concat!("../examples/", stringify!($name), ".rs"));

            #[test]
            fn runs() {
                crate::Outcome::check(main());
            }
        }
    };
}

example!(ablation);
example!(answer_equivalence);
example!(calibration_report);
example!(entropy_spikes);
example!(parse_completions);
example!(reward_service);
example!(score_completion);
example!(synth_fixtures);
