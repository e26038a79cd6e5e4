//! Fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use pircsi_core::instance::{draw_instance, sample_database, Database, Instance};
use pircsi_core::coins::RngCoins;
use pircsi_core::{Model, Params, Protocol};

/// A configured protocol with one sampled database and instance.
pub struct Fixture {
    pub protocol: Protocol,
    pub db: Database,
    pub instance: Instance,
}

impl Fixture {
    pub fn new(model: Model, n: usize, k: usize, m: usize, q: u64, seed: u64) -> Self {
        let params = Params::new(model, n, k, m, q).expect("valid fixture params");
        let protocol = Protocol::new(params).expect("protocol for fixture params");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let db = sample_database(&params, &mut rng);
        let instance = draw_instance(&params, &mut RngCoins(&mut rng));
        Self { protocol, db, instance }
    }

    /// Label used as the benchmark id.
    pub fn label(&self) -> String {
        self.protocol.params().label()
    }

    /// One full retrieval with coins from `rng`; returns the downloaded symbol count.
    pub fn retrieve(&self, rng: &mut ChaCha20Rng) -> usize {
        let mut perms = ChaCha20Rng::seed_from_u64(rand::Rng::random(rng));
        self.protocol
            .retrieve(&self.instance, &self.db, &mut RngCoins(&mut *rng), &mut RngCoins(&mut perms))
            .expect("fixture retrieval")
            .downloaded()
    }
}

/// The worked examples plus a larger Model I case.
pub fn standard_fixtures() -> Vec<Fixture> {
    vec![
        Fixture::new(Model::I, 2, 9, 3, 3, 1),
        Fixture::new(Model::I, 3, 6, 0, 3, 2),
        Fixture::new(Model::II, 2, 10, 4, 3, 3),
        Fixture::new(Model::II, 2, 5, 4, 3, 4),
        Fixture::new(Model::II, 3, 6, 2, 5, 5),
        Fixture::new(Model::II, 3, 6, 6, 5, 6),
    ]
}
