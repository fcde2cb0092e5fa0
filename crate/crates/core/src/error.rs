use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{field}` must be positive and finite (got {value})")]
    NonPositive { field: &'static str, value: f64 },

    #[error("hop band K*df = {occupied_hz} Hz exceeds the available bandwidth {bandwidth_hz} Hz")]
    BandwidthExceeded { occupied_hz: f64, bandwidth_hz: f64 },

    #[error("{num_tx} transmit antennas exceed the {num_hops} available hops (embedding needs M <= K)")]
    TooManyTxAntennas { num_tx: usize, num_hops: usize },

    #[error("{num_tx} transmit antennas is below the K/Q = {min} lower bound")]
    TooFewTxAntennas { num_tx: usize, min: f64 },

    #[error("{num_rx} receive antennas cannot equalize {num_tx} transmit streams (need N >= M)")]
    TooFewRxAntennas { num_rx: usize, num_tx: usize },

    #[error("PRI / pulse duration = {ratio} is not an integer")]
    NonIntegerPriRatio { ratio: f64 },

    #[error("BW / (K*df) = {ratio} is not an integer")]
    NonIntegerFreqAlphabet { ratio: f64 },

    #[error("{name} alphabet size {value} is not a power of two")]
    NonPowerOfTwoAlphabet { name: &'static str, value: u64 },

    #[error("{name} alphabet given as {given} but the timing/bandwidth parameters imply {derived}")]
    AlphabetMismatch {
        name: &'static str,
        given: usize,
        derived: usize,
    },

    #[error("{name} constellation order {value} is not a power of two")]
    NonPowerOfTwoConstellation { name: &'static str, value: usize },

    #[error("sample rate {sample_rate_hz} Hz is below the bandwidth {bandwidth_hz} Hz")]
    Undersampled {
        sample_rate_hz: f64,
        bandwidth_hz: f64,
    },

    #[error("fs * chip duration = {samples_per_chip} is not a positive integer")]
    NonIntegerChipLength { samples_per_chip: f64 },

    #[error("exact integer range exceeded while computing {what}")]
    OverflowGuard { what: &'static str },

    #[error("need {needed} bits to encode, only {available} available")]
    InsufficientBits { needed: usize, available: usize },

    #[error("expected {expected} pulse plans / schedule entries, got {got}")]
    PlanLengthMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("scheme carries no information bits")]
    ZeroRateScheme,

    #[error("channel matrix is rank deficient (condition number {condition:e})")]
    RankDeficientChannel { condition: f64 },

    #[error("exhaustive search over {hypotheses} hypotheses exceeds the limit of {limit}")]
    SearchSpaceTooLarge { hypotheses: u128, limit: u128 },

    #[error("delay {delay_s} s is outside the frame")]
    DelayOutOfRange { delay_s: f64 },

    #[error("ambiguity job needs {work:e} term evaluations, limit is {limit:e}")]
    GridTooLarge { work: f64, limit: f64 },

    #[error("invalid secret key: {0}")]
    InvalidKey(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
