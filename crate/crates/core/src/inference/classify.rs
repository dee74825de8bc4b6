//! Modal class assignment from posterior probabilities.

use serde::{Deserialize, Serialize};

use crate::em::{e_step, PosteriorMatrix};
use crate::error::Result;
use crate::model::{Dataset, ModelSpec, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// 0-based class index.
    pub class: usize,
    /// Posterior probability of the assigned class.
    pub confidence: f64,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Modal class of every row of a posterior matrix.
pub fn assign(posterior: &PosteriorMatrix) -> Vec<Assignment> {
    (0..posterior.rows())
        .map(|i| {
            let row = posterior.row(i);
            let class = argmax(row);
            Assignment { class, confidence: row[class] }
        })
        .collect()
}

/// Posterior matrix at `theta` and the modal class of every record.
pub fn classify(dataset: &Dataset, spec: &ModelSpec, theta: &ParameterSet) -> Result<(PosteriorMatrix, Vec<Assignment>)> {
    let post = e_step(dataset, spec, theta)?;
    let assignments = assign(&post);
    Ok((post, assignments))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lowest_class() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.1, 0.2, 0.7]), 2);
    }

    #[test]
    fn posterior_rows_are_assigned_by_argmax() {
        let post = PosteriorMatrix::from_rows(3, 2, vec![0.9, 0.1, 0.5, 0.5, 0.3, 0.7]).unwrap();
        let a = assign(&post);
        assert_eq!(a.iter().map(|a| a.class).collect::<Vec<_>>(), vec![0, 0, 1]);
        assert_eq!(a[0].confidence, 0.9);
    }

    #[test]
    fn confidence_is_the_largest_posterior() {
        let (data, spec, theta) = crate::em::fixtures::two_class_data(200, 3);
        let (post, assignments) = classify(&data, &spec, &theta).unwrap();
        for (i, a) in assignments.iter().enumerate() {
            let m = post.row(i).iter().cloned().fold(0.0, f64::max);
            assert_eq!(a.confidence, m);
            assert!(a.confidence >= 0.5);
        }
    }
}
