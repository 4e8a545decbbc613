//! On-disk formats shared with other tools: BEMB embeddings, label CSV,
//! taxonomy manifests, BDEC checkpoints and the provider line protocol.

use std::process::Command;

use biophilic::data::{
    decode_embeddings, encode_embeddings, parse_labels, read_embeddings, write_embeddings, Embedding, LabelTaxonomy,
};
use biophilic::decoder::{decode_checkpoint, encode_checkpoint, DecoderParams, DecoderShape};
use biophilic::explain::ProviderProcess;
use biophilic::Error;

fn bemb_bytes(dim: u32, records: &[(&str, Vec<f32>)]) -> Vec<u8> {
    let mut b = b"BEMB".to_vec();
    b.extend(1u32.to_le_bytes());
    b.extend(dim.to_le_bytes());
    for (id, v) in records {
        b.extend((id.len() as u32).to_le_bytes());
        b.extend(id.as_bytes());
        v.iter().for_each(|x| b.extend(x.to_le_bytes()));
    }
    b
}

#[test]
fn bemb_matches_the_documented_layout() {
    let records = [("a.png", vec![0.5f32, -1.0, 2.25]), ("dir/ü.png", vec![0.0, 1e-3, -7.0])];
    let bytes = bemb_bytes(3, &records);
    let (dim, emb) = decode_embeddings(&bytes).unwrap();
    assert_eq!(dim, 3);
    assert_eq!(emb[1].id, "dir/ü.png");
    assert_eq!(emb[1].vector, records[1].1);
    assert!(!emb[0].normalized);
    assert_eq!(encode_embeddings(&emb, 3).unwrap(), bytes);

    let empty = bemb_bytes(512, &[]);
    assert_eq!(decode_embeddings(&empty).unwrap(), (512, vec![]));

    let short = bemb_bytes(512, &[("x", vec![0.0; 511])]);
    assert!(matches!(decode_embeddings(&short), Err(Error::Format(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_embeddings(&bad), Err(Error::Format(_))));
    let nan = bemb_bytes(1, &[("x", vec![f32::NAN])]);
    assert!(matches!(decode_embeddings(&nan), Err(Error::Format(_))));
}

#[test]
fn bemb_file_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.bemb");
    let vectors: Vec<Embedding> =
        (0..5).map(|i| Embedding::new(format!("img{i}"), (0..512).map(|j| (i * j) as f32 * 0.01).collect())).collect();
    write_embeddings(&path, &vectors).unwrap();
    let first = std::fs::read(&path).unwrap();
    write_embeddings(&path, &read_embeddings(&path).unwrap()).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn label_csv_follows_taxonomy_order() {
    let tax = LabelTaxonomy::biophilic_default();
    let mut header = String::from("id");
    for l in tax.labels().iter().rev() {
        header += &format!(",{l}");
    }
    // Columns in reverse order still land in taxonomy order.
    let mut row = vec!["0"; 15];
    row[0] = "1";
    let csv = format!("{header}\nimg1,{}\n", row.join(","));
    let recs = parse_labels(csv.as_bytes(), &tax).unwrap();
    assert_eq!(recs[0].labels[14], 1);
    assert_eq!(recs[0].labels.iter().map(|&b| b as usize).sum::<usize>(), 1);

    let missing = header.replace(",Water", "");
    let csv = format!("{missing}\nimg1,{}\n", vec!["0"; 14].join(","));
    assert!(matches!(parse_labels(csv.as_bytes(), &tax), Err(Error::Validation(_))));
}

#[test]
fn taxonomy_manifests() {
    let tax = LabelTaxonomy::biophilic_default();
    assert_eq!(tax.len(), 15);
    assert_eq!(tax.labels().last().unwrap(), "Non-significantly Biophilic");
    assert_eq!(LabelTaxonomy::from_json(&tax.to_json()).unwrap(), tax);

    let two = LabelTaxonomy::from_json(r#"{"labels": ["Water", "Humans"], "biophilic_set": ["Water"]}"#).unwrap();
    assert_eq!(two.len(), 2);
    assert!(two.is_biophilic(0) && !two.is_biophilic(1));
    assert!(LabelTaxonomy::from_json(r#"{"labels": ["A", "A"]}"#).is_err());
    assert!(LabelTaxonomy::from_json(r#"{"labels": ["A"], "biophilic_set": ["B"]}"#).is_err());
    assert_ne!(tax.content_hash(), LabelTaxonomy::biophilic_seasonal().content_hash());
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let params = DecoderParams::init(DecoderShape { input_dim: 16, hidden: [8, 4], n_labels: 3 }, 9).unwrap();
    let bytes = encode_checkpoint(&params, None);
    assert_eq!(&bytes[..4], b"BDEC");
    let back = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back.params, params.to_checkpoint_precision());
    assert!(back.optimizer.is_none());
    assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
}

const ECHO_PROVIDER: &str = r#"
import json, sys
for line in sys.stdin:
    try:
        req = json.loads(line)
    except ValueError:
        print(json.dumps({"id": None, "error": "malformed"}), flush=True)
        continue
    print(json.dumps({"id": req["id"], "embedding": [float(len(req["png_b64"])), 1.0]}), flush=True)
"#;

#[test]
fn provider_process_pipelines_in_order() {
    if !Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success()) {
        eprintln!("python3 not available; skipping provider process test");
        return;
    }
    let (_guard, mut client) =
        ProviderProcess::spawn("python3", &["-c".to_string(), ECHO_PROVIDER.to_string()]).unwrap();
    let pngs: Vec<Vec<u8>> = (0..100).map(|i| vec![7u8; i * 3]).collect();
    let out = client.embed_png(&pngs).unwrap();
    assert_eq!(out.len(), 100);
    for (i, e) in out.iter().enumerate() {
        // Base64 of 3i bytes is 4i characters.
        assert_eq!(e, &vec![(4 * i) as f32, 1.0]);
    }

    assert!(matches!(ProviderProcess::spawn("/nonexistent/provider", &[]), Err(Error::Provider(_))));
}
