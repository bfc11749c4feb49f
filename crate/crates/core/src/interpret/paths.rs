use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::mutual_information;
use crate::models::LayerStack;
use crate::ndcore::Matrix;

/// Product of a pathway encoder's weight matrices, `|p| x 1` collapsed to a
/// vector: the weight of every input-to-output path summed over hidden units.
/// Biases and activations are ignored.
pub fn neural_path_weights(stack: &LayerStack) -> Result<Vec<f64>> {
    let Some(first) = stack.layers.first() else {
        return Err(Error::InvalidArgument("empty layer stack".into()));
    };
    let mut product = first.weight.clone();
    for layer in &stack.layers[1..] {
        product = product.matmul(&layer.weight)?;
    }
    if product.cols() != 1 {
        return Err(Error::shape("neural_path_weights", format!("stack ends in width {}, expected 1", product.cols())));
    }
    Ok(product.into_vec())
}

pub fn anpw(npw: &[f64]) -> Vec<f64> {
    npw.iter().map(|v| v.abs()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneWeight {
    pub gene: String,
    /// Signed path weight; the ranking uses its magnitude.
    pub npw: f64,
}

impl fmt::Display for GeneWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:+.2}", self.gene, self.npw)
    }
}

/// The `k` genes of one pathway with the largest |NPW|; equal magnitudes are
/// ordered by gene name. `gene_names` lists the pathway's genes in encoder input order.
pub fn top_genes_by_anpw(stack: &LayerStack, gene_names: &[String], k: usize) -> Result<Vec<GeneWeight>> {
    let npw = neural_path_weights(stack)?;
    if npw.len() != gene_names.len() {
        return Err(Error::shape("top_genes_by_anpw", format!("{} weights for {} genes", npw.len(), gene_names.len())));
    }
    if k > npw.len() {
        log::warn!("requested top {k} genes of a {}-gene pathway; returning all", npw.len());
    }
    let mut ranked: Vec<GeneWeight> =
        gene_names.iter().zip(&npw).map(|(g, &w)| GeneWeight { gene: g.clone(), npw: w }).collect();
    ranked.sort_by(|a, b| b.npw.abs().total_cmp(&a.npw.abs()).then_with(|| a.gene.cmp(&b.gene)));
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedPathway {
    pub column: usize,
    pub name: String,
    pub mutual_information: f64,
}

/// Columns of `a` ranked by mutual information with `labels` (nats),
/// descending; ties keep column order. `k` is clamped to the column count.
pub fn rank_pathways_by_mi(a: &Matrix, labels: &[usize], names: &[String], k: usize) -> Result<Vec<RankedPathway>> {
    if names.len() != a.cols() {
        return Err(Error::shape("rank_pathways_by_mi", format!("{} names for {} columns", names.len(), a.cols())));
    }
    let mut ranked = (0..a.cols())
        .map(|c| {
            Ok(RankedPathway {
                column: c,
                name: names[c].clone(),
                mutual_information: mutual_information(&a.column(c), labels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|x, y| y.mutual_information.total_cmp(&x.mutual_information));
    ranked.truncate(k.min(a.cols()));
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Dense;
    use crate::ndcore::{finite_diff_grad, relative_error, Rng};

    fn dense(w: &[&[f64]]) -> Dense {
        let weight = Matrix::from_rows(w).unwrap();
        let bias = Matrix::zeros(1, weight.cols());
        Dense { weight, bias }
    }

    #[test]
    fn hand_products() {
        let single = LayerStack { layers: vec![dense(&[&[0.3], &[-0.7]])] };
        assert_eq!(neural_path_weights(&single).unwrap(), vec![0.3, -0.7]);
        let two = LayerStack { layers: vec![dense(&[&[1.0, 0.0], &[0.0, 2.0]]), dense(&[&[1.0], &[1.0]])] };
        assert_eq!(neural_path_weights(&two).unwrap(), vec![1.0, 2.0]);
        let wide = LayerStack { layers: vec![dense(&[&[1.0, 2.0]])] };
        assert!(neural_path_weights(&wide).is_err());
    }

    #[test]
    fn absolute_weights() {
        assert_eq!(anpw(&[-0.5, 0.2]), vec![0.5, 0.2]);
        assert_eq!(anpw(&[0.0, 0.0]), vec![0.0, 0.0]);
        let v = [-1.5, 2.0, -0.0];
        assert_eq!(anpw(&anpw(&v)), anpw(&v));
    }

    #[test]
    fn matches_jacobian_where_linear() {
        // positive weights and inputs keep every ReLU in its linear regime
        let mut rng = Rng::new(3);
        let mut layers = Vec::new();
        for (fi, fo) in [(5, 3), (3, 2), (2, 1)] {
            let w = Matrix::new(fi, fo, (0..fi * fo).map(|_| 0.1 + rng.uniform()).collect()).unwrap();
            layers.push(Dense { weight: w, bias: Matrix::zeros(1, fo) });
        }
        let stack = LayerStack { layers };
        let x = Matrix::row_vector(&[0.5, 1.0, 1.5, 2.0, 0.7]);
        let jac =
            finite_diff_grad(|x| stack.forward(x, 0.0, false, &mut Rng::new(0)).unwrap()[(0, 0)], &x, 1e-5).unwrap();
        for (j, n) in jac.as_slice().iter().zip(neural_path_weights(&stack).unwrap()) {
            assert!(relative_error(*j, n, 1e-12) < 1e-6);
        }
    }

    #[test]
    fn ranking_rules() {
        let stack = LayerStack { layers: vec![dense(&[&[0.2], &[-0.62], &[0.62], &[-0.1]])] };
        let genes: Vec<String> = ["D", "ST3GAL3", "B", "A"].iter().map(|s| s.to_string()).collect();
        let top = top_genes_by_anpw(&stack, &genes, 10).unwrap();
        assert_eq!(top.iter().map(|g| g.gene.as_str()).collect::<Vec<_>>(), ["B", "ST3GAL3", "D", "A"]);
        assert_eq!(top[1].to_string(), "ST3GAL3 -0.62");
        assert_eq!(top[0].to_string(), "B +0.62");
        assert_eq!(top_genes_by_anpw(&stack, &genes, 2).unwrap().len(), 2);
    }

    #[test]
    fn sign_flip_keeps_ranking() {
        let mut rng = Rng::new(9);
        let w1 = Matrix::new(6, 3, (0..18).map(|_| rng.normal()).collect()).unwrap();
        let w2 = Matrix::new(3, 1, (0..3).map(|_| rng.normal()).collect()).unwrap();
        let stack = LayerStack {
            layers: vec![
                Dense { weight: w1.clone(), bias: Matrix::zeros(1, 3) },
                Dense { weight: w2.clone(), bias: Matrix::zeros(1, 1) },
            ],
        };
        let mut flipped = stack.clone();
        for r in 0..6 {
            flipped.layers[0].weight[(r, 1)] *= -1.0;
        }
        flipped.layers[1].weight[(1, 0)] *= -1.0;
        let genes: Vec<String> = (0..6).map(|i| format!("G{i}")).collect();
        let a: Vec<String> = top_genes_by_anpw(&stack, &genes, 6).unwrap().into_iter().map(|g| g.gene).collect();
        let b: Vec<String> = top_genes_by_anpw(&flipped, &genes, 6).unwrap().into_iter().map(|g| g.gene).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn mi_ranking() {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let mut rng = Rng::new(1);
        let mut a = Matrix::zeros(60, 3);
        for r in 0..60 {
            a[(r, 0)] = rng.normal();
            a[(r, 1)] = 1.0;
            a[(r, 2)] = f64::from(u8::from(labels[r] == 2));
        }
        let names: Vec<String> = ["noise", "flat", "onehot"].iter().map(|s| s.to_string()).collect();
        let ranked = rank_pathways_by_mi(&a, &labels, &names, 10).unwrap();
        assert_eq!(ranked.len(), 3);
        assert_eq!(ranked[0].name, "onehot");
        assert_eq!(ranked[2].name, "flat");
        assert_eq!(ranked[2].mutual_information, 0.0);
    }
}
