//! Dictionary directories: one MCT1 file per filter bank plus a
//! `dict.txt` manifest.
//!
//! Level 0 of dictionary `Dc` is stored as `bank_Dc.mct`, level `l` as
//! `bank_Dc_l<l>.mct`. Untied dictionaries add `bank_<name>_analysis.mct`
//! files with the same naming. The manifest lists every bank with its
//! filter side `n`, feature count `K` and output count `p`.

use std::path::Path;

use mccdic_core::dictionary::{DictionaryBank, MultiScaleDictionary, UntiedPair};
use mccdic_core::solver::{ModelDictionaries, DICTIONARY_NAMES};

use crate::error::{Error, Result};
use crate::io::{read_mct, write_mct};
use crate::keyvalue::KeyValues;

pub const MANIFEST: &str = "dict.txt";
const FORMAT: &str = "mccdic-dict-1";

fn bank_name(dict: &str, level: usize, analysis: bool) -> String {
    let mut name = dict.to_string();
    if level > 0 {
        name.push_str(&format!("_l{level}"));
    }
    if analysis {
        name.push_str("_analysis");
    }
    name
}

/// Writes `dicts` into `dir`, creating it if needed.
pub fn save_dictionaries(dir: &Path, dicts: &ModelDictionaries) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tied = dicts.is_tied();
    let widths = dicts.widths();
    let mut kv = KeyValues::default();
    kv.insert("format", FORMAT);
    kv.insert("names", DICTIONARY_NAMES.join(","));
    kv.insert("levels", dicts.levels());
    kv.insert("widths", join(&widths));
    kv.insert("n", dicts.dc.synthesis().size());
    kv.insert("tied", tied);
    let mut banks = Vec::new();
    for (dict, pair) in dicts.iter() {
        let sides: &[(bool, &MultiScaleDictionary)] = if tied {
            &[(false, pair.synthesis())]
        } else {
            &[(false, pair.synthesis()), (true, pair.analysis())]
        };
        for &(analysis, msd) in sides {
            for (level, bank) in msd.banks().iter().enumerate() {
                let name = bank_name(dict, level, analysis);
                write_mct(&dir.join(format!("bank_{name}.mct")), &bank.to_tensor())?;
                kv.insert(&format!("bank.{name}.n"), bank.size());
                kv.insert(&format!("bank.{name}.K"), bank.features());
                kv.insert(&format!("bank.{name}.p"), bank.outputs());
                banks.push(name);
            }
        }
    }
    kv.insert("banks", banks.join(","));
    kv.write(&dir.join(MANIFEST))
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn load_bank(dir: &Path, kv: &KeyValues, name: &str) -> Result<DictionaryBank> {
    let path = dir.join(format!("bank_{name}.mct"));
    let bank = DictionaryBank::from_tensor(&read_mct(&path)?)?;
    let expect = [
        ("n", bank.size()),
        ("K", bank.features()),
        ("p", bank.outputs()),
    ];
    for (key, actual) in expect {
        let listed: usize = kv.parse_required(&format!("bank.{name}.{key}"))?;
        if listed != actual {
            return Err(Error::format(
                &path,
                format!("manifest says {key} = {listed}, file has {actual}"),
            ));
        }
    }
    Ok(bank)
}

pub fn load_dictionaries(dir: &Path) -> Result<ModelDictionaries> {
    let manifest = dir.join(MANIFEST);
    let kv = KeyValues::read(&manifest)?;
    if kv.require("format")? != FORMAT {
        return Err(Error::format(&manifest, "unsupported dictionary format"));
    }
    let levels: usize = kv.parse_required("levels")?;
    let tied: bool = kv.parse_required("tied")?;
    let mut pairs = Vec::with_capacity(DICTIONARY_NAMES.len());
    for dict in DICTIONARY_NAMES {
        let side = |analysis| -> Result<MultiScaleDictionary> {
            let banks = (0..levels)
                .map(|l| load_bank(dir, &kv, &bank_name(dict, l, analysis)))
                .collect::<Result<_>>()?;
            Ok(MultiScaleDictionary::new(banks)?)
        };
        let synthesis = side(false)?;
        pairs.push(if tied {
            UntiedPair::tied(synthesis)
        } else {
            UntiedPair::new(synthesis, side(true)?)?
        });
    }
    let mut it = pairs.into_iter();
    let mut next = || it.next().expect("six dictionaries");
    Ok(ModelDictionaries::new(
        next(),
        next(),
        next(),
        next(),
        next(),
        next(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_names() {
        assert_eq!(bank_name("Dc", 0, false), "Dc");
        assert_eq!(bank_name("Qv", 2, true), "Qv_l2_analysis");
    }
}
