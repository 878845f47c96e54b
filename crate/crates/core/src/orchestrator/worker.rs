//! Workers own one slave and its input-side memory. The orchestrator talks
//! to them through orders and replies, either in-line or over channels to
//! one thread per worker.

use std::sync::mpsc::{channel, Receiver, Sender};

use crate::coupling::GlobalPair;
use crate::polynomial::{InputPolynomial, InterfaceState, PolyError, Step, StepMode};
use crate::slave::{SlaveError, SlaveSystem};

#[derive(Debug, Clone)]
pub(crate) enum Order {
    InitialOutputs,
    SetInitialInputs(Vec<f64>),
    /// Roll back, build the inputs for `step` and integrate it.
    Step {
        step: Step,
        right: Option<(Vec<f64>, Vec<f64>)>,
    },
    Commit,
    Stop,
}

#[derive(Debug, Clone)]
pub(crate) struct StepReply {
    pub outputs: GlobalPair,
    pub mode: StepMode,
    pub polys: Vec<InputPolynomial>,
}

#[derive(Debug, Clone)]
pub(crate) enum Reply {
    Outputs(Vec<f64>),
    Step(StepReply),
    /// State vector after commit.
    Committed(Vec<f64>),
    Ack,
    PolyFailure(PolyError),
    SlaveFailure(SlaveError),
}

/// One slave with its interface memory.
#[derive(Debug)]
pub struct Worker {
    pub(crate) slave: SlaveSystem,
    pub(crate) iface: InterfaceState,
}

impl Worker {
    pub(crate) fn new(slave: SlaveSystem, t_init: f64) -> Self {
        let n_in = slave.n_inputs();
        Self {
            slave,
            iface: InterfaceState::new(t_init, vec![0.0; n_in]),
        }
    }

    pub fn slave(&self) -> &SlaveSystem {
        &self.slave
    }

    pub fn interface(&self) -> &InterfaceState {
        &self.iface
    }

    pub(crate) fn handle(&mut self, order: Order) -> Reply {
        match order {
            Order::InitialOutputs => {
                let u = vec![0.0; self.slave.n_inputs()];
                Reply::Outputs(self.slave.outputs_at(&u))
            }
            Order::SetInitialInputs(u) => {
                self.iface.set_u_init(u);
                Reply::Ack
            }
            Order::Step { step, right } => {
                self.slave.rollback();
                let right_ref = right.as_ref().map(|(v, d)| (v.as_slice(), d.as_slice()));
                let (mode, polys) = match self.iface.build(step, right_ref) {
                    Ok(v) => v,
                    Err(e) => return Reply::PolyFailure(e),
                };
                match self.slave.integrate_extended(step, &polys) {
                    Ok(outputs) => Reply::Step(StepReply {
                        outputs,
                        mode,
                        polys,
                    }),
                    Err(e) => Reply::SlaveFailure(e),
                }
            }
            Order::Commit => {
                self.iface.commit();
                self.slave.commit();
                Reply::Committed(self.slave.state().x.clone())
            }
            Order::Stop => Reply::Ack,
        }
    }
}

/// Scatter one order per worker and gather the replies in system order.
pub(crate) trait Backend {
    fn scatter_gather(&mut self, orders: Vec<Order>) -> Vec<Reply>;
}

pub(crate) struct Sequential<'a> {
    pub workers: &'a mut [Worker],
}

impl Backend for Sequential<'_> {
    fn scatter_gather(&mut self, orders: Vec<Order>) -> Vec<Reply> {
        self.workers
            .iter_mut()
            .zip(orders)
            .map(|(w, o)| w.handle(o))
            .collect()
    }
}

pub(crate) struct Threaded {
    links: Vec<(Sender<Order>, Receiver<Reply>)>,
}

impl Threaded {
    /// Spawn one thread per worker inside `scope`. Threads run until a
    /// `Stop` order or until their channel closes.
    pub fn spawn<'scope, 'env>(
        scope: &'scope std::thread::Scope<'scope, 'env>,
        workers: &'env mut [Worker],
    ) -> Self {
        let links = workers
            .iter_mut()
            .map(|w| {
                let (otx, orx) = channel::<Order>();
                let (rtx, rrx) = channel::<Reply>();
                scope.spawn(move || {
                    while let Ok(order) = orx.recv() {
                        let stop = matches!(order, Order::Stop);
                        let reply = w.handle(order);
                        if rtx.send(reply).is_err() || stop {
                            break;
                        }
                    }
                });
                (otx, rrx)
            })
            .collect();
        Self { links }
    }

    pub fn stop(&mut self) {
        let n = self.links.len();
        self.scatter_gather(vec![Order::Stop; n]);
    }
}

impl Backend for Threaded {
    fn scatter_gather(&mut self, orders: Vec<Order>) -> Vec<Reply> {
        for ((tx, _), o) in self.links.iter().zip(orders) {
            tx.send(o).expect("worker thread alive");
        }
        self.links
            .iter()
            .map(|(_, rx)| rx.recv().expect("worker thread replies"))
            .collect()
    }
}
