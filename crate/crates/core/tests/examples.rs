macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/examples/",
                stringify!($name),
                ".rs"
            ));
        }

        #[test]
        fn $name() {
            $name::run_example().unwrap();
        }
    };
}

example!(allocate_bandwidth);
example!(latency_budget);
example!(train_federated);
example!(pruning_masks);
example!(gradient_check);
example!(convergence_bound);
example!(summarize_metrics);
example!(noniid_partition);
