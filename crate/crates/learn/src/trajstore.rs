//! Trajectory store: canonical JSON and a flat binary format.
//!
//! Binary layout (all little-endian):
//!   magic "DXTJ" | u32 version = 1 | u32 record count | u32 num_envs
//! then per record:
//!   u32 stage_index | u32 steps | u32 obs_dim | u32 act_dim
//!   u8 success | 3 zero bytes | u64 env_steps | u64 seed
//!   u32 env_index | u32 round
//!   f32 observations [steps * obs_dim] row-major
//!   f32 actions      [steps * act_dim] row-major
//!   f32 rewards      [steps]

use crate::collect::Trajectory;
use crate::LearnError;

const MAGIC: &[u8; 4] = b"DXTJ";
const VERSION: u32 = 1;

pub fn to_json(trajectories: &[Trajectory]) -> String {
    serde_json::to_string(trajectories).expect("trajectories serialize")
}

pub fn from_json(text: &str) -> Result<Vec<Trajectory>, LearnError> {
    serde_json::from_str(text).map_err(|e| LearnError::SpecParse(e.to_string()))
}

pub fn to_binary(trajectories: &[Trajectory], num_envs: u32) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(trajectories.len() as u32).to_le_bytes());
    out.extend_from_slice(&num_envs.to_le_bytes());
    for t in trajectories {
        out.extend_from_slice(&t.stage_index.to_le_bytes());
        out.extend_from_slice(&t.steps.to_le_bytes());
        out.extend_from_slice(&t.obs_dim.to_le_bytes());
        out.extend_from_slice(&t.act_dim.to_le_bytes());
        out.push(u8::from(t.success));
        out.extend_from_slice(&[0u8; 3]);
        out.extend_from_slice(&t.env_steps.to_le_bytes());
        out.extend_from_slice(&t.seed.to_le_bytes());
        out.extend_from_slice(&t.env_index.to_le_bytes());
        out.extend_from_slice(&t.round.to_le_bytes());
        for v in &t.observations {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &t.actions {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &t.rewards {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_binary(bytes: &[u8]) -> Result<(Vec<Trajectory>, u32), LearnError> {
    let bad = |msg: &str| LearnError::SpecParse(format!("trajectory store: {msg}"));
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8], LearnError> {
        if *cursor + n > bytes.len() {
            return Err(bad("truncated"));
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    let read_u32 = |cursor: &mut usize| -> Result<u32, LearnError> {
        Ok(u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap()))
    };
    let read_u64 = |cursor: &mut usize| -> Result<u64, LearnError> {
        Ok(u64::from_le_bytes(take(cursor, 8)?.try_into().unwrap()))
    };

    if take(&mut cursor, 4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    if read_u32(&mut cursor)? != VERSION {
        return Err(bad("unsupported version"));
    }
    let count = read_u32(&mut cursor)? as usize;
    let num_envs = read_u32(&mut cursor)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let stage_index = read_u32(&mut cursor)?;
        let steps = read_u32(&mut cursor)?;
        let obs_dim = read_u32(&mut cursor)?;
        let act_dim = read_u32(&mut cursor)?;
        let success = take(&mut cursor, 1)?[0] != 0;
        let _pad = take(&mut cursor, 3)?;
        let env_steps = read_u64(&mut cursor)?;
        let seed = read_u64(&mut cursor)?;
        let env_index = read_u32(&mut cursor)?;
        let round = read_u32(&mut cursor)?;
        let mut read_f32s = |n: usize| -> Result<Vec<f32>, LearnError> {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(f32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()));
            }
            Ok(v)
        };
        let observations = read_f32s(steps as usize * obs_dim as usize)?;
        let actions = read_f32s(steps as usize * act_dim as usize)?;
        let rewards = read_f32s(steps as usize)?;
        out.push(Trajectory {
            stage_index,
            steps,
            obs_dim,
            act_dim,
            observations,
            actions,
            rewards,
            success,
            env_steps,
            seed,
            env_index,
            round,
        });
    }
    Ok((out, num_envs))
}
