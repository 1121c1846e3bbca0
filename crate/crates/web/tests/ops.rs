use ship_web::{parse_labels, profile, rank, spectrum};

#[test]
fn profile_of_the_four_label_example() {
    let p = profile("G:maj7, G:maj G:maj7\nG:minmaj7").unwrap();
    assert_eq!(p.hips.len(), 4);
    assert_eq!(p.columns.len(), 19);
    assert_eq!(p.ship[7], 1.0);
    assert_eq!((p.ship[13], p.ship[14]), (0.75, 0.25));
    assert_eq!((p.ship[16], p.ship[18]), (0.75, 0.25));
}

#[test]
fn ranking_follows_the_shared_profile() {
    let ranked = rank("G:maj7 G:maj G:maj7 G:minmaj7", "G:maj G:minmaj7 G:maj7").unwrap();
    let labels: Vec<&str> = ranked.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels[0], "G:maj7");
    assert!((ranked[0].probability - 0.6).abs() < 1e-12);
    let total: f64 = ranked.iter().map(|r| r.probability).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn spectrum_peaks_on_chord_tones() {
    let s = spectrum("A:min").unwrap();
    assert_eq!(s.magnitudes.len(), 192);
    assert_eq!(s.pitch_classes, ["C", "E", "A"]);
    let peak = (0..s.magnitudes.len()).max_by(|&a, &b| s.magnitudes[a].total_cmp(&s.magnitudes[b])).unwrap();
    // even bins sit on semitones from C1
    assert_eq!(peak % 2, 0);
    assert!([0, 4, 9].contains(&((peak / 2) % 12)));
}

#[test]
fn bad_input_is_reported() {
    assert!(parse_labels("  ").is_err());
    assert!(profile("G:maj H:min").unwrap_err().contains("H:min"));
    assert!(spectrum("C:nonsense").is_err());
    assert!(spectrum("N").unwrap().magnitudes.iter().all(|&m| m == 0.0));
}
