//! Synthetic benchmark datasets with known structure.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Column, ColumnSchema, Dataset, Schema, SchemaFeature};
use crate::model::{synthetic_dataset, FeatureParams, MixtureSpec, PriorSpec, ThetaCon};

pub struct Fixture {
    pub schema: Schema,
    /// Model to fit, with as many components as the generator used.
    pub spec: MixtureSpec,
    pub train: Dataset,
    pub test: Dataset,
    /// Generating parameters, when the data came from the model itself.
    pub truth: Option<ThetaCon>,
}

/// Features per party in [`vanishing_density`].
pub const VANISHING_FEATURES_PER_PARTY: usize = 12;
/// Categories per feature in [`vanishing_density`].
pub const VANISHING_CATEGORIES: usize = 10;
const VANISHING_CLUSTERS: usize = 5;

/// Two parties, each holding twelve ten-way categorical features, drawn from
/// five clusters. At the uniform starting point every party-local density
/// is `10^-12`, so `max_k LF = -27.6` and the density truncates to zero in
/// the 32-bit fraction.
///
/// Within cluster `j`, feature `f` takes one of two categories,
/// `(2j + f) mod 10` or `(2j + 1 + f) mod 10`, each on exactly half the
/// cluster's rows. Every category therefore occurs equally often in every
/// column, which makes the mean NLL stationary at the uniform point.
///
/// `n` must be a multiple of 10; the test set uses a different seed.
pub fn vanishing_density(n: usize, seed: u64) -> Fixture {
    assert!(n % (2 * VANISHING_CLUSTERS) == 0, "n must be a multiple of {}", 2 * VANISHING_CLUSTERS);
    let features: Vec<SchemaFeature> = (0..2)
        .flat_map(|p| {
            (0..VANISHING_FEATURES_PER_PARTY).map(move |f| SchemaFeature {
                name: format!("p{p}_f{f}"),
                party: p,
                column: ColumnSchema::Categorical { categories: (0..VANISHING_CATEGORIES).map(|c| format!("v{c}")).collect() },
            })
        })
        .collect();
    let schema = Schema::new(features).expect("valid fixture schema");
    let spec = schema.mixture_spec(VANISHING_CLUSTERS, PriorSpec::default());
    let draw = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let per = n / VANISHING_CLUSTERS;
        let cols = (0..schema.features.len())
            .map(|gf| {
                let f = gf;
                let mut v = Vec::with_capacity(n);
                for j in 0..VANISHING_CLUSTERS {
                    let mut half: Vec<u32> = (0..per).map(|i| (2 * j + (i % 2) + f) as u32 % VANISHING_CATEGORIES as u32).collect();
                    half.shuffle(&mut rng);
                    v.extend(half);
                }
                Column::Categorical(v)
            })
            .collect();
        Dataset::new(cols).expect("equal columns")
    };
    Fixture { train: draw(seed), test: draw(seed ^ 0x5eed), schema, spec, truth: None }
}

/// A known five-component mixture: party 0 holds a continuous and a
/// four-way categorical feature, party 1 a continuous and a three-way one.
pub fn five_component(n_train: usize, n_test: usize, seed: u64) -> Fixture {
    let schema = Schema::new(vec![
        SchemaFeature { name: "age".into(), party: 0, column: ColumnSchema::Continuous { min: 18.0, max: 90.0 } },
        SchemaFeature {
            name: "region".into(),
            party: 0,
            column: ColumnSchema::Categorical { categories: ["north", "south", "east", "west"].map(String::from).to_vec() },
        },
        SchemaFeature { name: "income".into(), party: 1, column: ColumnSchema::Continuous { min: 0.0, max: 200.0 } },
        SchemaFeature {
            name: "tier".into(),
            party: 1,
            column: ColumnSchema::Categorical { categories: ["basic", "plus", "premium"].map(String::from).to_vec() },
        },
    ])
    .expect("valid fixture schema");
    let spec = schema.mixture_spec(5, PriorSpec::default());
    let comp = |a0: f64, b0: f64, r: [f64; 4], a1: f64, b1: f64, t: [f64; 3]| {
        vec![
            FeatureParams::Beta { a: a0, b: b0 },
            FeatureParams::Categorical(r.to_vec()),
            FeatureParams::Beta { a: a1, b: b1 },
            FeatureParams::Categorical(t.to_vec()),
        ]
    };
    let truth = ThetaCon {
        pi: vec![0.3, 0.25, 0.2, 0.15, 0.1],
        params: vec![
            comp(2.0, 8.0, [0.7, 0.1, 0.1, 0.1], 2.0, 6.0, [0.8, 0.15, 0.05]),
            comp(8.0, 2.0, [0.1, 0.7, 0.1, 0.1], 6.0, 2.0, [0.05, 0.15, 0.8]),
            comp(5.0, 5.0, [0.1, 0.1, 0.7, 0.1], 3.0, 3.0, [0.2, 0.6, 0.2]),
            comp(1.5, 1.5, [0.25, 0.25, 0.25, 0.25], 8.0, 3.0, [0.6, 0.2, 0.2]),
            comp(3.0, 1.2, [0.1, 0.1, 0.1, 0.7], 1.2, 4.0, [0.1, 0.3, 0.6]),
        ],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = synthetic_dataset(&spec, &truth, n_train, &mut rng).expect("valid truth");
    let test = synthetic_dataset(&spec, &truth, n_test, &mut rng).expect("valid truth");
    Fixture { schema, spec, train, test, truth: Some(truth) }
}
