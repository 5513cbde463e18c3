use crate::error::{ensure, Result};

/// All-points average precision of a ranking.
///
/// Items are ranked by descending score, ties kept in input order; the result
/// is the mean, over relevant items, of the precision at each one's rank.
pub fn average_precision(scores: &[f64], relevance: &[bool]) -> Result<f64> {
    ensure!(
        scores.len() == relevance.len(),
        Validation,
        "{} scores but {} relevance flags",
        scores.len(),
        relevance.len()
    );
    let relevant = relevance.iter().filter(|&&r| r).count();
    ensure!(relevant > 0, Validation, "average precision is undefined without relevant items");

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if relevance[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / relevant as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ranking() {
        let scores = [0.9, 0.8, 0.7, 0.3, 0.2, 0.1];
        let rel = [true, true, true, false, false, false];
        assert_eq!(average_precision(&scores, &rel).unwrap(), 1.0);
    }

    #[test]
    fn relevant_item_second_of_two() {
        assert_eq!(average_precision(&[0.9, 0.1], &[false, true]).unwrap(), 0.5);
    }

    #[test]
    fn ties_follow_input_order() {
        assert_eq!(average_precision(&[0.5, 0.5], &[true, false]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
    }

    #[test]
    fn undefined_without_relevant_items() {
        assert!(average_precision(&[0.1, 0.2], &[false, false]).is_err());
        assert!(average_precision(&[0.1], &[true, false]).is_err());
    }
}
