use moodseq::models::{phq_to_label, BinaryLabel, SeverityLabel};

#[test]
fn all_scores_map_consistently() {
    let mut previous = 0;
    for score in 0..=24 {
        let (severity, binary) = phq_to_label(score).unwrap();
        let expected = match score {
            0..=4 => SeverityLabel::Healthy,
            5..=9 => SeverityLabel::Mild,
            10..=14 => SeverityLabel::Moderate,
            15..=19 => SeverityLabel::ModeratelySevere,
            _ => SeverityLabel::Severe,
        };
        assert_eq!(severity, expected, "score {score}");
        assert!(severity.index() >= previous);
        previous = severity.index();
        let significant = matches!(severity, SeverityLabel::ModeratelySevere | SeverityLabel::Severe)
            || (severity == SeverityLabel::Moderate && score > 10);
        assert_eq!(binary == BinaryLabel::Significant, significant, "score {score}");
        assert_eq!(binary == BinaryLabel::Significant, score > 10, "score {score}");
    }
    assert!(phq_to_label(-1).is_err());
    assert!(phq_to_label(25).is_err());
}
