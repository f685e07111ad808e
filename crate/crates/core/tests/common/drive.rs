//! A well-behaved random client for generated programs.
//!
//! The client only makes calls the signatures allow: the receiver handle
//! and every argument handle satisfy the declared precondition, including
//! the object's current state, and no handle is passed twice in one call.

use obs_core::interp::{audit, Command, DeployError, FaultKind, Interpreter, MonitorFault, ObjId, Outcome, ScriptArg, Value, World};
use obs_core::Ownership;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

use super::gen::{Ann, GenProgram, Param, Ty};

#[derive(Debug, Default)]
pub struct RunReport {
    pub commands: Vec<Command>,
    pub faults: Vec<MonitorFault>,
    pub invokes: usize,
    pub reverts: usize,
    /// Reverted invocations whose world differed from the one before it.
    pub rollback_mismatches: usize,
    /// Every audit, taken after each command, was balanced.
    pub balanced: bool,
    /// `new` handed out an id that was already in the heap.
    pub reused_ids: usize,
}

struct Client<'a> {
    interp: &'a Interpreter<'a>,
    model: &'a GenProgram,
    w: World,
    report: RunReport,
}

fn accepts(handle: Ownership, ann: &Ann) -> bool {
    match ann {
        Ann::Unowned => true,
        Ann::Shared => handle != Ownership::Unowned,
        Ann::Owned | Ann::States(_) => handle == Ownership::Owned,
    }
}

impl<'a> Client<'a> {
    fn record(&mut self, cmd: Command, o: &Outcome) {
        self.report.commands.push(cmd);
        if let Outcome::Fault(f) = o {
            self.report.faults.push(f.clone());
        }
        let mut w = self.w.clone();
        self.report.balanced &= audit(&mut w).balanced();
    }

    fn handles_of(&self, contract: &str) -> Vec<(ObjId, Ownership)> {
        self.w
            .handles
            .iter()
            .filter(|(id, _)| self.w.object(**id).is_some_and(|o| o.contract == contract))
            .map(|(id, p)| (*id, *p))
            .collect()
    }

    fn state_ok(&self, id: ObjId, ann: &Ann) -> bool {
        match ann {
            Ann::States(s) => self.w.object(id).and_then(|o| o.state.clone()).is_some_and(|st| s.contains(&st)),
            _ => true,
        }
    }

    /// Creates an object of contract `j` and returns its handle.
    fn make(&mut self, rng: &mut StdRng, j: usize, depth: usize) -> Option<ObjId> {
        if depth > 6 {
            return None;
        }
        let c = &self.model.contracts[j];
        let args = self.args(rng, &c.ctor_params.clone(), &[], depth)?;
        let cmd = Command::New { contract: c.name.clone(), args: args.clone() };
        let vals: Vec<Value> = args.iter().map(ScriptArg::to_value).collect();
        let before: Vec<ObjId> = self.w.heap.keys().copied().collect();
        let o = self.interp.create(&mut self.w, &c.name, &vals);
        if let Outcome::Returned(v) = &o {
            if v.as_ref().is_some_and(|(id, _)| before.contains(&id)) {
                self.report.reused_ids += 1;
            }
        }
        self.record(cmd, &o);
        match o {
            Outcome::Returned(v) => v.as_ref().map(|(id, _)| id),
            _ => None,
        }
    }

    fn args(&mut self, rng: &mut StdRng, params: &[Param], exclude: &[ObjId], depth: usize) -> Option<Vec<ScriptArg>> {
        let mut used: Vec<ObjId> = exclude.to_vec();
        let mut out = Vec::new();
        for p in params {
            match &p.ty {
                Ty::Int => out.push(ScriptArg::Int(rng.gen_range(-2..8))),
                Ty::Ref(j, pre) => {
                    let name = self.model.contracts[*j].name.clone();
                    let cands: Vec<ObjId> = self
                        .handles_of(&name)
                        .into_iter()
                        .filter(|(id, perm)| !used.contains(id) && accepts(*perm, pre) && self.state_ok(*id, pre))
                        .map(|(id, _)| id)
                        .collect();
                    let id = match cands.choose(rng) {
                        Some(id) if rng.gen_bool(0.7) => *id,
                        _ => {
                            let id = self.make(rng, *j, depth + 1)?;
                            if !self.state_ok(id, pre) {
                                return None;
                            }
                            id
                        }
                    };
                    used.push(id);
                    out.push(ScriptArg::Handle(id));
                }
            }
        }
        Some(out)
    }

    fn invoke(&mut self, rng: &mut StdRng) {
        let mut options = Vec::new();
        for (&id, &perm) in &self.w.handles {
            let Some(obj) = self.w.object(id) else { continue };
            let Some(j) = self.model.index(&obj.contract) else { continue };
            for t in &self.model.contracts[j].txns {
                let pre = t.recv_pre();
                if accepts(perm, &pre) && self.state_ok(id, &pre) {
                    options.push((id, j, t.clone()));
                }
            }
        }
        let Some((id, _, t)) = options.choose(rng).cloned() else { return };
        let Some(args) = self.args(rng, &t.params, &[id], 0) else { return };
        // an argument's construction may have changed nothing about `id`,
        // but recheck in case it did
        let perm = self.w.handles.get(&id).copied().unwrap_or(Ownership::Unowned);
        if !accepts(perm, &t.recv_pre()) || !self.state_ok(id, &t.recv_pre()) {
            return;
        }
        let before = self.w.clone();
        let vals: Vec<Value> = args.iter().map(ScriptArg::to_value).collect();
        let o = self.interp.invoke(&mut self.w, id, &t.name, &vals);
        self.report.invokes += 1;
        if let Outcome::Reverted(_) = o {
            self.report.reverts += 1;
            if self.w != before {
                self.report.rollback_mismatches += 1;
            }
        }
        self.record(Command::Invoke { obj: id, txn: t.name.clone(), args }, &o);
    }

    fn disown(&mut self, rng: &mut StdRng) {
        let owned: Vec<ObjId> =
            self.w.handles.iter().filter(|(_, p)| **p == Ownership::Owned).map(|(id, _)| *id).collect();
        // keep the main object
        let owned: Vec<ObjId> = owned.into_iter().filter(|id| Some(*id) != self.w.main).collect();
        if let Some(&id) = owned.choose(rng) {
            let o = self.interp.disown(&mut self.w, id);
            self.record(Command::Disown(id), &o);
        }
    }
}

/// Deploys the generated program's main contract and runs `steps` random
/// client actions against it.
pub fn run(interp: &Interpreter, model: &GenProgram, rng: &mut StdRng, steps: usize) -> RunReport {
    let mut c = Client {
        interp,
        model,
        w: World { next_id: 1, ..World::default() },
        report: RunReport { balanced: true, ..RunReport::default() },
    };
    let main_params = model.contracts[0].ctor_params.clone();
    if let Some(args) = c.args(rng, &main_params, &[], 0) {
        let vals: Vec<Value> = args.iter().map(ScriptArg::to_value).collect();
        c.report.commands.push(Command::Deploy(args));
        match interp.deploy_into(&mut c.w, &vals) {
            Ok(_) | Err(DeployError::Reverted(_)) => {}
            Err(DeployError::Fault(f)) => c.report.faults.push(f),
            Err(e) => c.report.faults.push(MonitorFault::new(FaultKind::Permission, format!("deploy: {e}"))),
        }
    }
    for _ in 0..steps {
        match rng.gen_range(0..10) {
            0 | 1 => {
                let j = rng.gen_range(0..model.contracts.len());
                c.make(rng, j, 0);
            }
            2 => c.disown(rng),
            _ => c.invoke(rng),
        }
    }
    c.report.balanced &= audit(&mut c.w).balanced();
    c.report
}
