//! A small deterministic sequence model for CPU tests.
//!
//! Each decoding step is a log-linear classifier over the output vocabulary.
//! Its features are hashed input n-grams conjoined with the previously
//! emitted token, so the weights used for the first target token and for the
//! end-of-sequence decision are disjoint. Training is sparse gradient descent
//! on the summed token negative log-likelihood; decoding is greedy.
//!
//! Plain gradient descent rather than Adam is deliberate: Adam's
//! per-coordinate normalisation moves a feature seen once as far as one seen
//! in every example, and the model then memorises filler words.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::modeling::backend::{check_batch, Backend, BackendError, BackendSpec, GenOutput};
use crate::par::Exec;
use crate::prompt::PromptInstance;
use crate::util::fnv1a;

const EOS: &str = "</s>";
const BOS_ID: u64 = u64::MAX;
const MAGIC: &[u8; 6] = b"FDTOY2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    /// The feature table has `2^hash_bits` rows.
    pub hash_bits: u32,
    /// Greedy decoding stops after this many tokens.
    pub max_output_tokens: usize,
    /// Multiplier on the scheduled learning rate. The schedule is tuned for
    /// Adam on pretrained transformers; gradient descent on a linear model
    /// starting from zero needs much larger steps.
    pub lr_scale: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            hash_bits: 18,
            max_output_tokens: 8,
            lr_scale: 1000.0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(8..=24).contains(&self.hash_bits) {
            return Err("backend.hash_bits: must lie in 8..=24".into());
        }
        if self.max_output_tokens == 0 {
            return Err("backend.max_output_tokens: must be at least 1".into());
        }
        if !(self.lr_scale > 0.0 && self.lr_scale.is_finite()) {
            return Err("backend.lr_scale: must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ToySeq2Seq {
    config: ToyConfig,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    rows: HashMap<u32, Vec<f64>>,
    step: u64,
    exec: Exec,
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0xAC00..=0xD7AF)
}

/// Hashed n-gram features of an input, sorted and deduplicated.
pub fn input_features(text: &str) -> Vec<u64> {
    let lower = text.to_lowercase();
    let mut words: Vec<String> = Vec::new();
    for raw in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        if raw.chars().any(is_cjk) {
            words.extend(raw.chars().map(String::from));
        } else {
            words.push(raw.to_string());
        }
    }
    let mut feats = vec![fnv1a(b"bias")];
    for w in &words {
        feats.push(fnv1a(format!("u:{w}").as_bytes()));
    }
    for pair in words.windows(2) {
        feats.push(fnv1a(format!("b:{} {}", pair[0], pair[1]).as_bytes()));
    }
    feats.sort_unstable();
    feats.dedup();
    feats
}

fn mix(feature: u64, prev: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = feature ^ prev.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl ToySeq2Seq {
    pub fn new(config: ToyConfig) -> Self {
        let mut model = ToySeq2Seq {
            config,
            vocab: Vec::new(),
            index: HashMap::new(),
            rows: HashMap::new(),
            step: 0,
            exec: Exec::default(),
        };
        model.token_id(EOS);
        model
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn token_id(&mut self, tok: &str) -> usize {
        if let Some(&i) = self.index.get(tok) {
            return i;
        }
        let i = self.vocab.len();
        self.vocab.push(tok.to_string());
        self.index.insert(tok.to_string(), i);
        i
    }

    fn buckets(&self, feats: &[u64], prev: u64) -> Vec<u32> {
        let mask = (1u64 << self.config.hash_bits) - 1;
        feats.iter().map(|f| (mix(*f, prev) & mask) as u32).collect()
    }

    fn logits(&self, buckets: &[u32]) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab.len()];
        for b in buckets {
            if let Some(row) = self.rows.get(b) {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += w;
                }
            }
        }
        out
    }

    fn decode(&self, input: &str) -> String {
        let feats = input_features(input);
        let mut prev = BOS_ID;
        let mut out: Vec<&str> = Vec::new();
        for _ in 0..self.config.max_output_tokens {
            let logits = self.logits(&self.buckets(&feats, prev));
            // first maximum wins, so an untrained model emits EOS
            let mut best = 0;
            for (i, l) in logits.iter().enumerate() {
                if *l > logits[best] {
                    best = i;
                }
            }
            if best == 0 {
                break;
            }
            out.push(&self.vocab[best]);
            prev = best as u64;
        }
        out.join(" ")
    }

    /// Mean negative log-likelihood of the batch targets under the current
    /// parameters, without updating them.
    pub fn batch_nll(&self, batch: &[PromptInstance]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|inst| {
                let feats = input_features(&inst.input_text);
                let mut prev = BOS_ID;
                let mut nll = 0.0;
                for tok in inst.target_text.split_whitespace().chain(std::iter::once(EOS)) {
                    let p = softmax(&self.logits(&self.buckets(&feats, prev)));
                    match self.index.get(tok) {
                        Some(&y) => {
                            nll -= p[y].ln();
                            prev = y as u64;
                        }
                        None => return f64::INFINITY,
                    }
                }
                nll
            })
            .sum();
        total / batch.len() as f64
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.vocab.len() as u32).to_le_bytes());
        for tok in &self.vocab {
            out.extend_from_slice(&(tok.len() as u32).to_le_bytes());
            out.extend_from_slice(tok.as_bytes());
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        let mut keys: Vec<&u32> = self.rows.keys().collect();
        keys.sort_unstable();
        out.extend_from_slice(&(keys.len() as u32).to_le_bytes());
        for k in keys {
            let row = &self.rows[k];
            out.extend_from_slice(&k.to_le_bytes());
            out.extend_from_slice(&(row.len() as u32).to_le_bytes());
            for x in row {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    fn decode_payload(&mut self, payload: &[u8]) -> Result<(), String> {
        let mut r = Reader { buf: payload, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err("bad magic".into());
        }
        let mut vocab = Vec::new();
        for _ in 0..r.u32()? {
            let len = r.u32()? as usize;
            let tok = std::str::from_utf8(r.take(len)?).map_err(|e| e.to_string())?;
            vocab.push(tok.to_string());
        }
        if vocab.first().map(String::as_str) != Some(EOS) {
            return Err("vocabulary must start with the end-of-sequence token".into());
        }
        let step = r.u64()?;
        let mut rows = HashMap::new();
        for _ in 0..r.u32()? {
            let bucket = r.u32()?;
            if u64::from(bucket) >= 1u64 << self.config.hash_bits {
                return Err(format!("bucket {bucket} out of range"));
            }
            let len = r.u32()? as usize;
            if len > vocab.len() {
                return Err("row longer than vocabulary".into());
            }
            let w = (0..len).map(|_| r.f64()).collect::<Result<_, _>>()?;
            rows.insert(bucket, w);
        }
        if r.pos != payload.len() {
            return Err("trailing bytes".into());
        }
        self.index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        self.vocab = vocab;
        self.rows = rows;
        self.step = step;
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or("truncated payload")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Backend for ToySeq2Seq {
    fn spec(&self) -> BackendSpec {
        BackendSpec::Toy(self.config.clone())
    }

    fn fit_step(&mut self, batch: &[PromptInstance], lr: f64) -> Result<f64, BackendError> {
        check_batch(batch)?;
        let targets: Vec<Vec<usize>> = batch
            .iter()
            .map(|inst| {
                let mut ids: Vec<usize> = inst.target_text.split_whitespace().map(|t| self.token_id(t)).collect();
                ids.push(0);
                ids
            })
            .collect();
        let n_vocab = self.vocab.len();
        let scale = 1.0 / batch.len() as f64;
        let mut grads: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let mut loss = 0.0;
        for (inst, ids) in batch.iter().zip(&targets) {
            let feats = input_features(&inst.input_text);
            let mut prev = BOS_ID;
            for &y in ids {
                let buckets = self.buckets(&feats, prev);
                let p = softmax(&self.logits(&buckets));
                loss -= p[y].ln() * scale;
                for b in buckets {
                    let g = grads.entry(b).or_insert_with(|| vec![0.0; n_vocab]);
                    for (v, pv) in p.iter().enumerate() {
                        g[v] += (pv - if v == y { 1.0 } else { 0.0 }) * scale;
                    }
                }
                prev = y as u64;
            }
        }
        self.step += 1;
        let lr = lr * self.config.lr_scale;
        for (bucket, g) in grads {
            let row = self.rows.entry(bucket).or_default();
            row.resize(n_vocab, 0.0);
            for (w, g) in row.iter_mut().zip(g) {
                *w -= lr * g;
            }
        }
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(BackendError::Internal(format!("non-finite loss at step {}", self.step)))
        }
    }

    fn generate(&self, inputs: &[String]) -> Vec<GenOutput> {
        self.exec.map(inputs, |i| Ok(self.decode(i)))
    }

    fn snapshot(&self) -> Result<Vec<u8>, BackendError> {
        Ok(self.encode())
    }

    fn restore(&mut self, payload: &[u8]) -> Result<(), BackendError> {
        self.decode_payload(payload).map_err(BackendError::BadPayload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Figure, Label, Language};
    use crate::modeling::TaskSpec;
    use crate::prompt::{Origin, TemplateRef};

    fn inst(input: &str, target: &str) -> PromptInstance {
        PromptInstance {
            input_text: input.into(),
            target_text: target.into(),
            label: if target == "Literal" {
                Label::Literal
            } else {
                Label::Figurative
            },
            origin: Origin {
                example_id: input.into(),
                task: TaskSpec::new(Figure::Idiom, Language::En, TemplateRef::id("A")).unwrap(),
            },
        }
    }

    fn batch() -> Vec<PromptInstance> {
        vec![
            inst("the cat sat", "Literal"),
            inst("raining cats and dogs", "Idiomatic"),
            inst("he kicked the bucket", "Idiomatic"),
            inst("she kicked the ball", "Literal"),
        ]
    }

    #[test]
    fn untrained_model_emits_empty_string() {
        let m = ToySeq2Seq::new(ToyConfig::default());
        assert_eq!(m.generate(&["anything".into()]), vec![Ok(String::new())]);
    }

    #[test]
    fn fits_a_fixed_batch() {
        let mut m = ToySeq2Seq::new(ToyConfig::default());
        let b = batch();
        for _ in 0..300 {
            m.fit_step(&b, 1e-3).unwrap();
        }
        let inputs: Vec<String> = b.iter().map(|i| i.input_text.clone()).collect();
        let out: Vec<String> = m.generate(&inputs).into_iter().map(Result::unwrap).collect();
        let gold: Vec<String> = b.iter().map(|i| i.target_text.clone()).collect();
        assert_eq!(out, gold);
        assert!(m.batch_nll(&b) < 0.05);
    }

    #[test]
    fn multi_token_targets_decode() {
        let mut m = ToySeq2Seq::new(ToyConfig::default());
        let b = vec![inst("x y", "Espressione idiomatica"), inst("z w", "Literal")];
        for _ in 0..200 {
            m.fit_step(&b, 1e-3).unwrap();
        }
        assert_eq!(m.generate(&["x y".into()])[0].as_deref(), Ok("Espressione idiomatica"));
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let mut m = ToySeq2Seq::new(ToyConfig::default());
        for _ in 0..20 {
            m.fit_step(&batch(), 1e-4).unwrap();
        }
        let payload = m.snapshot().unwrap();
        let mut fresh = ToySeq2Seq::new(ToyConfig::default());
        fresh.restore(&payload).unwrap();
        assert_eq!(fresh.snapshot().unwrap(), payload);
        assert_eq!(fresh.batch_nll(&batch()).to_bits(), m.batch_nll(&batch()).to_bits());
        assert!(fresh.restore(&payload[..payload.len() - 3]).is_err());
        assert!(fresh.restore(b"nonsense").is_err());
    }

    #[test]
    fn cjk_characters_are_features() {
        assert_eq!(input_features("他 笑 死 了").len(), input_features("他笑死了").len());
        assert!(input_features("他笑死了").len() > 2);
    }
}
