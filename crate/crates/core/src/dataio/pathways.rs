use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::PathwayMask;

use super::delimited::write_text;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Pathway {
    pub name: String,
    pub genes: Vec<String>,
}

/// Named gene lists in file order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PathwaySet {
    pub pathways: Vec<Pathway>,
}

impl PathwaySet {
    pub fn len(&self) -> usize {
        self.pathways.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pathways.is_empty()
    }

    fn push(
        &mut self,
        path: &Path,
        line: usize,
        name: String,
        genes: Vec<String>,
        seen: &mut HashSet<String>,
    ) -> Result<()> {
        if name.is_empty() {
            return Err(Error::parse(path, line, "empty pathway name"));
        }
        if !seen.insert(name.clone()) {
            return Err(Error::parse(path, line, format!("duplicate pathway `{name}`")));
        }
        let mut uniq = HashSet::new();
        let genes: Vec<String> = genes.into_iter().filter(|g| !g.is_empty() && uniq.insert(g.clone())).collect();
        if genes.is_empty() {
            return Err(Error::parse(path, line, format!("pathway `{name}` lists no genes")));
        }
        self.pathways.push(Pathway { name, genes });
        Ok(())
    }

    pub fn to_gmt(&self) -> String {
        let mut out = String::new();
        for p in &self.pathways {
            out.push_str(&p.name);
            out.push_str("\tNA");
            for g in &p.genes {
                out.push('\t');
                out.push_str(g);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_gmt(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_gmt())
    }
}

/// `name<TAB>description<TAB>gene...` per line.
pub fn parse_gmt_str(text: &str, origin: &Path) -> Result<PathwaySet> {
    let mut set = PathwaySet::default();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("expected at least 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let genes = fields[2..].iter().map(|g| g.trim().to_string()).collect();
        set.push(origin, i + 1, fields[0].trim().to_string(), genes, &mut seen)?;
    }
    Ok(set)
}

pub fn parse_gmt(path: &Path) -> Result<PathwaySet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gmt_str(&text, path)
}

/// MSigDB JSON export: an object keyed by set name whose values carry a
/// `geneSymbols` array. Set order follows the file.
pub fn parse_msigdb_json_str(text: &str, origin: &Path) -> Result<PathwaySet> {
    let root: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::parse(origin, e.line(), e.to_string()))?;
    let obj = root.as_object().ok_or_else(|| Error::parse(origin, 1, "top level must be an object of gene sets"))?;
    let mut set = PathwaySet::default();
    let mut seen = HashSet::new();
    for (name, body) in obj {
        let genes = body
            .get("geneSymbols")
            .and_then(|g| g.as_array())
            .ok_or_else(|| Error::parse(origin, 0, format!("set `{name}` has no `geneSymbols` array")))?;
        let genes = genes
            .iter()
            .map(|g| {
                g.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::parse(origin, 0, format!("set `{name}` has a non-string gene")))
            })
            .collect::<Result<Vec<_>>>()?;
        set.push(origin, 0, name.clone(), genes, &mut seen)?;
    }
    Ok(set)
}

pub fn parse_msigdb_json(path: &Path) -> Result<PathwaySet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_msigdb_json_str(&text, path)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PathwayResolution {
    pub name: String,
    pub present: usize,
    pub missing: usize,
    pub dropped: bool,
}

/// How a pathway set matched a gene axis.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResolveReport {
    pub pathways: Vec<PathwayResolution>,
}

impl ResolveReport {
    pub fn dropped(&self) -> usize {
        self.pathways.iter().filter(|p| p.dropped).count()
    }

    pub fn missing_genes(&self) -> usize {
        self.pathways.iter().map(|p| p.missing).sum()
    }
}

/// Maps each pathway to the column indices of its genes present in
/// `gene_names`. Pathways with no present gene are dropped with a warning.
pub fn resolve_pathways(set: &PathwaySet, gene_names: &[String]) -> Result<(Vec<PathwayMask>, ResolveReport)> {
    let index: std::collections::HashMap<&str, usize> =
        gene_names.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let mut masks = Vec::new();
    let mut report = ResolveReport::default();
    for p in &set.pathways {
        let idx: Vec<usize> = p.genes.iter().filter_map(|g| index.get(g.as_str()).copied()).collect();
        let dropped = idx.is_empty();
        report.pathways.push(PathwayResolution {
            name: p.name.clone(),
            present: idx.len(),
            missing: p.genes.len() - idx.len(),
            dropped,
        });
        if dropped {
            log::warn!("pathway `{}` has none of its {} genes in the table; dropped", p.name, p.genes.len());
            continue;
        }
        masks.push(PathwayMask::new(p.name.clone(), idx, gene_names.len())?);
    }
    if masks.is_empty() {
        return Err(Error::Config("no pathway has any gene present in the expression table".into()));
    }
    Ok((masks, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> &'static Path {
        Path::new("fixture")
    }

    #[test]
    fn gmt_line_format() {
        let s = parse_gmt_str("PX\turl\tG1\tG2\n", origin()).unwrap();
        assert_eq!(s.pathways, vec![Pathway { name: "PX".into(), genes: vec!["G1".into(), "G2".into()] }]);
        assert!(parse_gmt_str("", origin()).unwrap().is_empty());
        assert!(matches!(parse_gmt_str("A\tx\tG\nB\tx\n", origin()), Err(Error::Parse { line: 2, .. })));
        assert!(parse_gmt_str("A\tx\tG\nA\tx\tH\n", origin()).is_err());
    }

    #[test]
    fn json_and_gmt_agree() {
        let gmt = "KEGG_B\thttp://x\tTP53\tMDM2\nKEGG_A\tdesc\tBRCA1\n";
        let json = r#"{
            "KEGG_B": {"systematicName": "M1", "geneSymbols": ["TP53", "MDM2"]},
            "KEGG_A": {"systematicName": "M2", "geneSymbols": ["BRCA1"]}
        }"#;
        let a = parse_gmt_str(gmt, origin()).unwrap();
        let b = parse_msigdb_json_str(json, origin()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pathways[0].name, "KEGG_B");
        assert_eq!(parse_gmt_str(&a.to_gmt(), origin()).unwrap(), a);
        assert!(parse_msigdb_json_str(r#"{"X": {"genes": []}}"#, origin()).is_err());
    }

    #[test]
    fn resolution_policy() {
        let genes: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let set = parse_gmt_str("P1\t-\tA\tB\tZ\nP2\t-\tQ\nP3\t-\tC\tA\tB\n", origin()).unwrap();
        let (masks, report) = resolve_pathways(&set, &genes).unwrap();
        assert_eq!(masks.len(), 2);
        assert_eq!(masks[0].indices, vec![0, 1]);
        assert_eq!(masks[1].indices, vec![2, 0, 1]);
        assert_eq!(report.pathways[0].missing, 1);
        assert_eq!(report.dropped(), 1);
        let none = parse_gmt_str("P\t-\tQ\n", origin()).unwrap();
        assert!(matches!(resolve_pathways(&none, &genes), Err(Error::Config(_))));
        assert!(resolve_pathways(&PathwaySet::default(), &genes).is_err());
    }
}
