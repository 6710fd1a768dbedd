use malscope_core::encoder::{
    network_feature_pipeline, train_bilstm, train_cnn, BiLstmModel, BiLstmTrainConfig, CaptureSequence, CnnConfig,
    CnnModel, CnnTrainConfig, FlowOptions, FlowVector, FEATURE_DIM,
};
use malscope_core::image::{capture_images, ClassLabel, FlowImage, ImageCorpus, RECORD_LEN};
use malscope_core::nn::CellMode;
use malscope_core::pcap::CaptureSet;
use malscope_core::synth::{capture_corpus, three_flow_pcap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn cnn_separates_dark_and_bright_images() {
    let mut corpus = ImageCorpus::new();
    for (label, level) in [(ClassLabel::Benign, 0x20u8), (ClassLabel::Adware, 0xe0u8)] {
        corpus.push_capture(format!("{level}"), vec![FlowImage::from_pixels([level; RECORD_LEN]); 200], label);
    }
    let cfg = CnnTrainConfig {
        epochs: 5,
        seed: 1,
        ..Default::default()
    };
    let (model, report) = train_cnn(&corpus, &cfg).unwrap();
    let (_, acc) = malscope_core::encoder::evaluate_cnn(&model, &corpus);
    assert!(acc >= 0.99, "accuracy {acc}, log {:?}", report.epochs);
}

#[test]
fn initial_loss_is_near_uniform() {
    let mut corpus = ImageCorpus::new();
    for cap in capture_corpus(20, &[ClassLabel::Benign, ClassLabel::Adware], 6) {
        let (set, _) = CaptureSet::from_pcap(&cap.name, &cap.pcap, true).unwrap();
        corpus.push_capture(cap.name, capture_images(&set.flows, false), cap.label);
    }
    let model = CnnModel::init(CnnConfig::default(), 0);
    let (loss, _) = malscope_core::encoder::evaluate_cnn(&model, &corpus);
    eprintln!("initial loss {loss}");
    assert!((loss - 5f64.ln()).abs() < 0.5, "initial loss {loss}");
}

#[test]
fn bilstm_learns_sign_of_sequence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let seqs: Vec<CaptureSequence> = (0..60)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let len = rng.gen_range(1..6);
            CaptureSequence {
                source_name: format!("s{i}"),
                vectors: (0..len)
                    .map(|_| FlowVector::new((0..FEATURE_DIM).map(|_| sign * rng.gen_range(0.2..1.0)).collect()).unwrap())
                    .collect(),
                label: if sign > 0.0 { ClassLabel::Scareware } else { ClassLabel::Benign },
            }
        })
        .collect();
    let cfg = BiLstmTrainConfig {
        hidden: 8,
        epochs: 10,
        lr: 0.01,
        seed: 3,
        ..Default::default()
    };
    let (model, log) = train_bilstm(&seqs, &cfg).unwrap();
    assert!(log.last().unwrap().accuracy >= 0.99);
    let correct = seqs
        .iter()
        .filter(|s| {
            let p = model.predict_proba(&s.vectors).unwrap();
            p[s.label.id() as usize] > 0.5
        })
        .count();
    assert_eq!(correct, seqs.len());
}

#[test]
fn pipeline_equals_manual_chain() {
    let raw = three_flow_pcap();
    let cnn = CnnModel::init(CnnConfig::default(), 4);
    let lstm = BiLstmModel::init(FEATURE_DIM, 6, CellMode::Standard, 5);
    let opts = FlowOptions::default();
    let got = network_feature_pipeline("fixture", &raw, &cnn, &lstm, opts).unwrap();
    let (cap, _) = CaptureSet::from_pcap("fixture", &raw, true).unwrap();
    let images = capture_images(&cap.flows, false);
    let vectors: Vec<Vec<f64>> = images
        .iter()
        .map(|img| cnn.features(&CnnModel::batch(&[img])).unwrap().into_data())
        .collect();
    assert_eq!(got.0, lstm.encode(&vectors).unwrap());
}
