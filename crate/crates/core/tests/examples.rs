//! Every example must run to completion.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            include!(concat!("../examples/", stringify!($name), ".rs"));
        }

        #[test]
        fn $name() {
            $name::run().unwrap();
        }
    };
}

example!(synth_data);
example!(gradient_check);
example!(delay_embedding);
example!(model_forward);
example!(train_checkpoint);
example!(impute_series);
example!(eval_benchmark);
example!(latents_and_plots);
example!(latent_interpolation);
example!(cli_pipeline);
