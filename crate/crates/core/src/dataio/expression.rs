use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::Matrix;

use super::delimited::{read_records, render_rows, write_text};

/// What the numbers in an [`ExpressionTable`] currently mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scale {
    /// `log2(x + 1)`
    Log2Plus1,
    /// `log2(x + offset)`
    Log2PlusOffset {
        offset: f64,
    },
    Linear,
    /// Per-gene z-scores.
    ZScore,
    /// Per-gene percentile ranks in [0, 1].
    Percentile,
}

impl Scale {
    pub fn is_log(self) -> bool {
        matches!(self, Scale::Log2Plus1 | Scale::Log2PlusOffset { .. })
    }

    /// Maps one value on this scale back to linear space.
    pub fn to_linear(self, v: f64) -> Result<f64> {
        match self {
            Scale::Log2Plus1 => Ok(v.exp2() - 1.0),
            Scale::Log2PlusOffset { offset } => Ok(v.exp2() - offset),
            Scale::Linear => Ok(v),
            Scale::ZScore | Scale::Percentile => {
                Err(Error::Data(format!("{self:?} values cannot be mapped back to linear space")))
            }
        }
    }

    pub fn from_linear(self, v: f64) -> Result<f64> {
        match self {
            Scale::Log2Plus1 => Ok((v + 1.0).log2()),
            Scale::Log2PlusOffset { offset } => Ok((v + offset).log2()),
            Scale::Linear => Ok(v),
            Scale::ZScore | Scale::Percentile => {
                Err(Error::Data(format!("cannot map linear values onto a {self:?} scale")))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    GenesAsRows,
    SamplesAsRows,
}

/// Samples x genes expression matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionTable {
    pub sample_ids: Vec<String>,
    pub gene_names: Vec<String>,
    pub values: Matrix,
    pub scale: Scale,
}

impl ExpressionTable {
    pub fn new(sample_ids: Vec<String>, gene_names: Vec<String>, values: Matrix, scale: Scale) -> Result<Self> {
        if values.shape() != (sample_ids.len(), gene_names.len()) {
            return Err(Error::shape(
                "ExpressionTable",
                format!(
                    "{} samples x {} genes but values are {:?}",
                    sample_ids.len(),
                    gene_names.len(),
                    values.shape()
                ),
            ));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = sample_ids.iter().find(|s| !seen.insert(s.as_str())) {
            return Err(Error::Data(format!("duplicate sample id `{dup}`")));
        }
        if !values.all_finite() {
            return Err(Error::Data("expression values must be finite".into()));
        }
        Ok(Self { sample_ids, gene_names, values, scale })
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_genes(&self) -> usize {
        self.gene_names.len()
    }

    pub fn gene_index(&self) -> HashMap<&str, usize> {
        self.gene_names.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect()
    }

    pub fn select_samples(&self, rows: &[usize]) -> Result<Self> {
        Ok(Self {
            sample_ids: rows.iter().map(|&r| self.sample_ids[r].clone()).collect(),
            gene_names: self.gene_names.clone(),
            values: self.values.select_rows(rows)?,
            scale: self.scale,
        })
    }

    pub fn select_genes(&self, cols: &[usize]) -> Result<Self> {
        Ok(Self {
            sample_ids: self.sample_ids.clone(),
            gene_names: cols.iter().map(|&c| self.gene_names[c].clone()).collect(),
            values: self.values.select_columns(cols)?,
            scale: self.scale,
        })
    }

    /// Reorders genes to `names`; every name must be present.
    pub fn align_genes(&self, names: &[String]) -> Result<Self> {
        let index = self.gene_index();
        let cols = names
            .iter()
            .map(|n| {
                index
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| Error::Data(format!("gene `{n}` missing from expression table")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.select_genes(&cols)
    }

    /// Linear-space copy of the values.
    pub fn linear_values(&self) -> Result<Matrix> {
        let scale = self.scale;
        let data = self.values.as_slice().iter().map(|&v| scale.to_linear(v)).collect::<Result<Vec<_>>>()?;
        Matrix::new(self.values.rows(), self.values.cols(), data)
    }

    /// Writes samples as rows with a `sample` header column.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut rows = Vec::with_capacity(self.n_samples() + 1);
        let mut header = vec!["sample".to_string()];
        header.extend(self.gene_names.iter().cloned());
        rows.push(header);
        for (r, id) in self.sample_ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(self.values.row(r).iter().map(|v| v.to_string()));
            rows.push(row);
        }
        write_text(path, &render_rows(path, &rows)?)
    }
}

/// Reads a delimited matrix whose first row and first column are identifiers.
pub fn load_expression_tsv(path: &Path, orientation: Orientation, scale: Scale) -> Result<ExpressionTable> {
    let records = read_records(path)?;
    let Some(((_, header), body)) = records.split_first() else {
        return Err(Error::parse(path, 1, "empty file"));
    };
    let width = header.len();
    if width < 2 {
        return Err(Error::parse(path, 1, "header needs an identifier column and at least one data column"));
    }
    let col_ids: Vec<String> = header[1..].to_vec();
    let mut row_ids = Vec::with_capacity(body.len());
    let mut data = Vec::with_capacity(body.len() * (width - 1));
    for (line, rec) in body {
        if rec.len() != width {
            return Err(Error::parse(path, *line, format!("row has {} fields, header has {width}", rec.len())));
        }
        row_ids.push(rec[0].clone());
        for (j, cell) in rec[1..].iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::parse(path, *line, format!("empty cell in column `{}`", col_ids[j])));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(path, *line, format!("non-numeric cell `{cell}` in column `{}`", col_ids[j]))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(path, *line, format!("non-finite cell `{cell}`")));
            }
            data.push(v);
        }
    }
    let m = Matrix::new(row_ids.len(), col_ids.len(), data)?;
    let (samples, genes, values) = match orientation {
        Orientation::SamplesAsRows => (row_ids, col_ids, m),
        Orientation::GenesAsRows => (col_ids, row_ids, m.transpose()),
    };
    let mut seen = HashSet::new();
    if let Some(dup) = samples.iter().find(|s| !seen.insert(s.as_str())) {
        let line = match orientation {
            Orientation::GenesAsRows => 1,
            Orientation::SamplesAsRows => body.iter().filter(|(_, r)| &r[0] == dup).nth(1).map_or(0, |(l, _)| *l),
        };
        return Err(Error::parse(path, line, format!("duplicate sample id `{dup}`")));
    }
    ExpressionTable::new(samples, genes, values, scale)
}

/// Two-column `id -> name` table; the first row is a header.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeneMapping {
    pub map: HashMap<String, String>,
}

pub fn load_gene_mapping(path: &Path) -> Result<GeneMapping> {
    let records = read_records(path)?;
    let mut map = HashMap::new();
    for (line, rec) in records.iter().skip(1) {
        if rec.len() < 2 || rec[0].is_empty() {
            return Err(Error::parse(path, *line, "expected `id<TAB>name`"));
        }
        if rec[1].is_empty() {
            continue;
        }
        map.insert(rec[0].clone(), rec[1].clone());
    }
    Ok(GeneMapping { map })
}

/// Renames genes through `mapping`, dropping unmapped ids. Several ids that map
/// to one name are all kept for [`merge_duplicate_genes`].
pub fn map_gene_ids(table: &ExpressionTable, mapping: &GeneMapping) -> Result<ExpressionTable> {
    let mut cols = Vec::new();
    let mut names = Vec::new();
    for (i, id) in table.gene_names.iter().enumerate() {
        if let Some(name) = mapping.map.get(id) {
            cols.push(i);
            names.push(name.clone());
        }
    }
    let dropped = table.n_genes() - cols.len();
    if dropped > 0 {
        log::info!("gene mapping dropped {dropped} unmapped ids");
    }
    if cols.is_empty() {
        return Err(Error::Data("no gene id could be mapped".into()));
    }
    let mut out = table.select_genes(&cols)?;
    out.gene_names = names;
    Ok(out)
}

/// Averages duplicate gene columns in linear space, then maps back to the log
/// scale. Output keeps first-occurrence gene order.
pub fn merge_duplicate_genes(table: &ExpressionTable) -> Result<ExpressionTable> {
    if !table.scale.is_log() {
        return Err(Error::Data(format!("duplicate merging needs a log2 scale, table is {:?}", table.scale)));
    }
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    for (i, g) in table.gene_names.iter().enumerate() {
        match slot.get(g.as_str()) {
            Some(&s) => groups[s].1.push(i),
            None => {
                slot.insert(g, groups.len());
                groups.push((g.clone(), vec![i]));
            }
        }
    }
    if groups.len() == table.n_genes() {
        return Ok(table.clone());
    }
    let scale = table.scale;
    let n = table.n_samples();
    let mut values = Matrix::zeros(n, groups.len());
    for r in 0..n {
        let row = table.values.row(r);
        for (c, (_, cols)) in groups.iter().enumerate() {
            values[(r, c)] = if cols.len() == 1 {
                row[cols[0]]
            } else {
                let mut sum = 0.0;
                for &k in cols {
                    sum += scale.to_linear(row[k])?;
                }
                scale.from_linear(sum / cols.len() as f64)?
            };
        }
    }
    ExpressionTable::new(table.sample_ids.clone(), groups.into_iter().map(|(g, _)| g).collect(), values, scale)
}

/// Restricts both tables to their common genes, in `a`'s order.
pub fn intersect_genes(a: &ExpressionTable, b: &ExpressionTable) -> Result<(ExpressionTable, ExpressionTable)> {
    let b_index = b.gene_index();
    let mut seen = HashSet::new();
    let common: Vec<String> =
        a.gene_names.iter().filter(|g| b_index.contains_key(g.as_str()) && seen.insert(g.as_str())).cloned().collect();
    if common.is_empty() {
        return Err(Error::Data("the two tables share no genes".into()));
    }
    Ok((a.align_genes(&common)?, b.align_genes(&common)?))
}

/// `10^6 * v / sum(v)`.
pub fn per_million(values: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Data("sample has no positive signal to normalise".into()));
    }
    Ok(values.iter().map(|v| v * 1e6 / total).collect())
}

fn per_million_log(table: &ExpressionTable) -> Result<ExpressionTable> {
    let linear = table.linear_values()?;
    let mut out = Matrix::zeros(linear.rows(), linear.cols());
    for r in 0..linear.rows() {
        let ppm = per_million(linear.row(r))
            .map_err(|_| Error::Data(format!("sample `{}` sums to zero in linear space", table.sample_ids[r])))?;
        for (o, v) in out.row_mut(r).iter_mut().zip(ppm) {
            *o = Scale::Log2Plus1.from_linear(v)?;
        }
    }
    ExpressionTable::new(table.sample_ids.clone(), table.gene_names.clone(), out, Scale::Log2Plus1)
}

/// FPKM (on the table's declared scale) to `log2(TPM + 1)`.
pub fn fpkm_to_tpm_log(table: &ExpressionTable) -> Result<ExpressionTable> {
    per_million_log(table)
}

/// Microarray intensity (on the table's declared scale) to `log2(IPM + 1)`.
pub fn intensity_to_ipm_log(table: &ExpressionTable) -> Result<ExpressionTable> {
    per_million_log(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(genes: &[&str], rows: &[&[f64]], scale: Scale) -> ExpressionTable {
        let samples = (0..rows.len()).map(|i| format!("S{i}")).collect();
        let m = Matrix::from_rows(rows).unwrap();
        ExpressionTable::new(samples, genes.iter().map(|s| s.to_string()).collect(), m, scale).unwrap()
    }

    #[test]
    fn load_both_orientations() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.tsv");
        std::fs::write(&p, "gene\tS1\tS2\nA\t1.5\t2\nB\t-3\t4.25\n").unwrap();
        let t = load_expression_tsv(&p, Orientation::GenesAsRows, Scale::Log2Plus1).unwrap();
        assert_eq!(t.sample_ids, ["S1", "S2"]);
        assert_eq!(t.gene_names, ["A", "B"]);
        assert_eq!(t.values.as_slice(), &[1.5, -3.0, 2.0, 4.25]);

        let t = load_expression_tsv(&p, Orientation::SamplesAsRows, Scale::Linear).unwrap();
        assert_eq!(t.sample_ids, ["A", "B"]);
        assert_eq!(t.values.as_slice(), &[1.5, 2.0, -3.0, 4.25]);

        let out = dir.path().join("y.csv");
        t.write_tsv(&out).unwrap();
        let back = load_expression_tsv(&out, Orientation::SamplesAsRows, Scale::Linear).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn malformed_files_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.tsv");
        std::fs::write(&p, "gene\tS1\tS2\nA\t1\t2\nB\t3\n").unwrap();
        match load_expression_tsv(&p, Orientation::GenesAsRows, Scale::Linear) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&p, "gene\tS1\nA\tx\n").unwrap();
        assert!(matches!(
            load_expression_tsv(&p, Orientation::GenesAsRows, Scale::Linear),
            Err(Error::Parse { line: 2, .. })
        ));
        std::fs::write(&p, "gene\tS1\nA\t\n").unwrap();
        assert!(load_expression_tsv(&p, Orientation::GenesAsRows, Scale::Linear).is_err());
        std::fs::write(&p, "sample\tA\nS1\t1\nS1\t2\n").unwrap();
        assert!(matches!(
            load_expression_tsv(&p, Orientation::SamplesAsRows, Scale::Linear),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn gene_mapping_contract() {
        let t = table(&["ENSG1", "ENSG2", "ENSG3"], &[&[1.0, 2.0, 3.0]], Scale::Log2Plus1);
        let identity = GeneMapping { map: t.gene_names.iter().map(|g| (g.clone(), g.clone())).collect() };
        assert_eq!(map_gene_ids(&t, &identity).unwrap(), t);

        let m = GeneMapping { map: [("ENSG1".to_string(), "TP53".to_string())].into() };
        let out = map_gene_ids(&t, &m).unwrap();
        assert_eq!(out.gene_names, ["TP53"]);
        assert_eq!(out.values.as_slice(), &[1.0]);

        let m = GeneMapping { map: [("ENSG1".into(), "X".into()), ("ENSG3".into(), "X".into())].into() };
        assert_eq!(map_gene_ids(&t, &m).unwrap().gene_names, ["X", "X"]);
        assert!(map_gene_ids(&t, &GeneMapping::default()).is_err());
    }

    #[test]
    fn duplicate_merge_in_linear_space() {
        let t = table(&["A", "A", "B"], &[&[1.0, 2.0, 5.0]], Scale::Log2Plus1);
        let m = merge_duplicate_genes(&t).unwrap();
        assert_eq!(m.gene_names, ["A", "B"]);
        assert!((m.values[(0, 0)] - 3f64.log2()).abs() < 1e-12);
        assert_eq!(m.values[(0, 1)], 5.0);
        assert_eq!(merge_duplicate_genes(&m).unwrap(), m);

        let same = table(&["A", "A"], &[&[2.5, 2.5]], Scale::Log2Plus1);
        assert!((merge_duplicate_genes(&same).unwrap().values[(0, 0)] - 2.5).abs() < 1e-12);

        let lin = table(&["A", "A"], &[&[1.0, 2.0]], Scale::Linear);
        assert!(merge_duplicate_genes(&lin).is_err());
    }

    #[test]
    fn intersection() {
        let a = table(&["A", "B", "C"], &[&[1.0, 2.0, 3.0]], Scale::Linear);
        let b = table(&["D", "C", "B"], &[&[4.0, 5.0, 6.0]], Scale::Linear);
        let (a2, b2) = intersect_genes(&a, &b).unwrap();
        assert_eq!(a2.gene_names, ["B", "C"]);
        assert_eq!(b2.gene_names, ["B", "C"]);
        assert_eq!(b2.values.as_slice(), &[6.0, 5.0]);
        let (a3, _) = intersect_genes(&a, &a).unwrap();
        assert_eq!(a3, a);
        let d = table(&["Z"], &[&[0.0]], Scale::Linear);
        assert!(intersect_genes(&a, &d).is_err());
    }

    #[test]
    fn per_million_values() {
        assert_eq!(per_million(&[1.0, 3.0]).unwrap(), vec![250000.0, 750000.0]);
        assert_eq!(per_million(&[42.0]).unwrap(), vec![1e6]);
        let a = per_million(&[1.0, 2.0, 5.0]).unwrap();
        let b = per_million(&[7.0, 14.0, 35.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(per_million(&[0.0, 0.0]).is_err());

        let t = table(&["A", "B"], &[&[1.0, 3.0], &[0.0, 0.0]], Scale::Linear);
        assert!(intensity_to_ipm_log(&t).is_err());
        let t = table(&["A", "B"], &[&[1.0, 3.0]], Scale::Linear);
        let ipm = intensity_to_ipm_log(&t).unwrap();
        assert_eq!(ipm.scale, Scale::Log2Plus1);
        assert_eq!(ipm.values.as_slice(), &[250001f64.log2(), 750001f64.log2()]);
        let fpkm = table(&["A", "B"], &[&[1.0, 2.0]], Scale::Log2Plus1);
        let tpm = fpkm_to_tpm_log(&fpkm).unwrap();
        assert!((tpm.values[(0, 0)] - 250001f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn log_round_trip() {
        for v in [0.0, 0.5, 3.25, 12.0] {
            for s in [Scale::Log2Plus1, Scale::Log2PlusOffset { offset: 1e-3 }] {
                let back = s.from_linear(s.to_linear(v).unwrap()).unwrap();
                assert!((back - v).abs() < 1e-12);
            }
        }
    }
}
