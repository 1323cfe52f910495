use std::collections::BTreeMap;
use std::fmt;

use super::{Endpoint, RtlError};

/// Width of one configuration register / bitstream data word.
pub const CONFIG_WORD_BITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldMeaning {
    MuxSelect,
    FifoMode,
    SplitFifoRole,
    CoreConfig,
}

impl FieldMeaning {
    pub fn name(self) -> &'static str {
        match self {
            FieldMeaning::MuxSelect => "mux_select",
            FieldMeaning::FifoMode => "fifo_mode",
            FieldMeaning::SplitFifoRole => "split_fifo_role",
            FieldMeaning::CoreConfig => "core_config",
        }
    }

    pub fn parse(s: &str) -> Option<FieldMeaning> {
        match s {
            "mux_select" => Some(FieldMeaning::MuxSelect),
            "fifo_mode" => Some(FieldMeaning::FifoMode),
            "split_fifo_role" => Some(FieldMeaning::SplitFifoRole),
            "core_config" => Some(FieldMeaning::CoreConfig),
            _ => None,
        }
    }
}

impl fmt::Display for FieldMeaning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One configuration field: a bit slice of a 32-bit register at
/// `(tile, feature_id, reg_index)` that drives `target`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConfigField {
    /// Name of the CFG_REG instance holding the field.
    pub name: String,
    pub tile: (u32, u32),
    pub feature_id: u32,
    pub reg_index: u32,
    pub bit_offset: u32,
    pub bit_width: u32,
    pub target: Endpoint,
    pub meaning: FieldMeaning,
}

impl ConfigField {
    /// Packed address: x, y, feature and register index, one byte each.
    pub fn address(&self) -> u32 {
        pack_address(self.tile.0, self.tile.1, self.feature_id, self.reg_index)
    }

    pub fn mask(&self) -> u32 {
        if self.bit_width >= 32 {
            u32::MAX
        } else {
            ((1u32 << self.bit_width) - 1) << self.bit_offset
        }
    }

    pub fn extract(&self, word: u32) -> u32 {
        (word & self.mask()) >> self.bit_offset
    }

    pub fn max_value(&self) -> u64 {
        (1u64 << self.bit_width) - 1
    }

    pub(crate) fn sort_key(&self) -> (u32, u32, String) {
        (self.address(), self.bit_offset, self.name.clone())
    }
}

pub fn pack_address(x: u32, y: u32, feature: u32, reg: u32) -> u32 {
    (x & 0xff) << 24 | (y & 0xff) << 16 | (feature & 0xff) << 8 | (reg & 0xff)
}

pub fn unpack_address(addr: u32) -> (u32, u32, u32, u32) {
    (addr >> 24, (addr >> 16) & 0xff, (addr >> 8) & 0xff, addr & 0xff)
}

/// Packs requested fields into 32-bit registers per (tile, feature). Fields
/// never straddle a register boundary.
#[derive(Default)]
pub(crate) struct ConfigAllocator {
    cursors: BTreeMap<((u32, u32), u32), (u32, u32)>,
    fields: Vec<ConfigField>,
}

impl ConfigAllocator {
    pub fn alloc(
        &mut self,
        name: String,
        tile: (u32, u32),
        feature_id: u32,
        bit_width: u32,
        target: Endpoint,
        meaning: FieldMeaning,
    ) -> ConfigField {
        assert!((1..=CONFIG_WORD_BITS).contains(&bit_width), "field {name} width {bit_width}");
        let cur = self.cursors.entry((tile, feature_id)).or_insert((0, 0));
        if cur.1 + bit_width > CONFIG_WORD_BITS {
            cur.0 += 1;
            cur.1 = 0;
        }
        let field = ConfigField { name, tile, feature_id, reg_index: cur.0, bit_offset: cur.1, bit_width, target, meaning };
        cur.1 += bit_width;
        self.fields.push(field.clone());
        field
    }

    pub fn into_fields(self) -> Vec<ConfigField> {
        self.fields
    }
}

/// Sidecar text: one field per line,
/// `field <name> <x> <y> <feature> <reg> <offset> <width> <meaning> <inst>.<pin>`.
pub fn format_config_map(fields: &[ConfigField]) -> String {
    let mut sorted: Vec<&ConfigField> = fields.iter().collect();
    sorted.sort_by_key(|f| f.sort_key());
    let mut out = String::from("# name x y feature reg offset width meaning target\n");
    for f in sorted {
        out.push_str(&format!(
            "field {} {} {} {} {} {} {} {} {}\n",
            f.name, f.tile.0, f.tile.1, f.feature_id, f.reg_index, f.bit_offset, f.bit_width, f.meaning, f.target
        ));
    }
    out
}

pub fn parse_config_map(text: &str) -> Result<Vec<ConfigField>, RtlError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| RtlError::ConfigMap { line, message };
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() != 10 || toks[0] != "field" {
            return Err(err(format!("expected 10 columns starting with `field`, found {}", toks.len())));
        }
        let num = |s: &str| s.parse::<u32>().map_err(|_| err(format!("expected integer, found `{s}`")));
        let meaning = FieldMeaning::parse(toks[8]).ok_or_else(|| err(format!("unknown meaning `{}`", toks[8])))?;
        let (inst, pin) = toks[9].rsplit_once('.').ok_or_else(|| err(format!("target `{}` is not inst.pin", toks[9])))?;
        let width = num(toks[7])?;
        let offset = num(toks[6])?;
        if width == 0 || offset + width > CONFIG_WORD_BITS {
            return Err(err(format!("field [{offset}, +{width}) does not fit a 32-bit word")));
        }
        out.push(ConfigField {
            name: toks[1].to_string(),
            tile: (num(toks[2])?, num(toks[3])?),
            feature_id: num(toks[4])?,
            reg_index: num(toks[5])?,
            bit_offset: offset,
            bit_width: width,
            target: Endpoint::new(inst, pin),
            meaning,
        });
    }
    Ok(out)
}
