use super::RtlError;

/// One downstream direction seen from a source driving several switch-box
/// muxes: the mux's decoded one-hot select, the input index at which this
/// source appears on that mux, and the direction's ready signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JoinInput {
    pub sel_onehot: u32,
    pub src_index: u32,
    pub ready: bool,
}

fn check_onehot(v: u32) -> Result<(), RtlError> {
    if v.count_ones() > 1 {
        Err(RtlError::MalformedOneHot(v))
    } else {
        Ok(())
    }
}

/// Gate-level join reusing the muxes' one-hot decodes:
/// `AND_d (!sel_oh_d[src] | ready_d)`.
pub fn ready_join(inputs: &[JoinInput]) -> Result<bool, RtlError> {
    let mut out = true;
    for d in inputs {
        check_onehot(d.sel_onehot)?;
        let routed = d.src_index < 32 && (d.sel_onehot >> d.src_index) & 1 == 1;
        out &= !routed || d.ready;
    }
    Ok(out)
}

/// Lookup-table reference: the routing is decoded once into a table indexed
/// by the ready vector, as a configured LUT would hold it.
pub fn ready_join_lut(inputs: &[JoinInput]) -> Result<bool, RtlError> {
    let mut consumers = Vec::new();
    for (d, input) in inputs.iter().enumerate() {
        check_onehot(input.sel_onehot)?;
        let selected = (input.sel_onehot != 0).then(|| input.sel_onehot.trailing_zeros());
        if selected == Some(input.src_index) {
            consumers.push(d);
        }
    }
    let n = inputs.len();
    let table: Vec<bool> = (0..1usize << n).map(|readies| consumers.iter().all(|&d| readies >> d & 1 == 1)).collect();
    let key = inputs.iter().enumerate().fold(0usize, |acc, (d, i)| acc | (i.ready as usize) << d);
    Ok(table[key])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routed_north_and_west() {
        // Source sits at input 2 of the north and west muxes; south picks input 0.
        let inputs = [
            JoinInput { sel_onehot: 0b100, src_index: 2, ready: true },
            JoinInput { sel_onehot: 0b100, src_index: 2, ready: false },
            JoinInput { sel_onehot: 0b001, src_index: 2, ready: false },
        ];
        assert_eq!(ready_join(&inputs), Ok(false));
        assert_eq!(ready_join_lut(&inputs), Ok(false));
        let mut ok = inputs;
        ok[1].ready = true;
        assert_eq!(ready_join(&ok), Ok(true));
    }

    #[test]
    fn routed_nowhere_is_ready() {
        let inputs = [
            JoinInput { sel_onehot: 0, src_index: 1, ready: false },
            JoinInput { sel_onehot: 0b01, src_index: 1, ready: false },
        ];
        assert_eq!(ready_join(&inputs), Ok(true));
        assert_eq!(ready_join(&[]), Ok(true));
    }

    #[test]
    fn malformed_onehot() {
        let bad = [JoinInput { sel_onehot: 0b110, src_index: 1, ready: true }];
        assert_eq!(ready_join(&bad), Err(RtlError::MalformedOneHot(0b110)));
        assert_eq!(ready_join_lut(&bad), Err(RtlError::MalformedOneHot(0b110)));
    }
}
