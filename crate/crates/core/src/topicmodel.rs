//! Document-term matrices, LDA by collapsed Gibbs sampling, C_V topic
//! coherence and coherence-based choice of the topic count.

mod coherence;
mod dtm;
mod lda;
mod report;
mod select;

pub use coherence::{coherence_cv, coherence_of_word_lists, top_words, Coherence, DEFAULT_TOP_N, DEFAULT_WINDOW, EPSILON};
pub use dtm::{build_dtm, Dtm, DEFAULT_MAX_DF_FRACTION, DEFAULT_MIN_DF};
pub use lda::{dominant_topic, fit_lda, infer_theta, LdaModel, LdaParams};
pub use report::{topic_report, TopicReport, TopicRow};
pub use select::{select_k, KScore, KSelection, SelectParams};
