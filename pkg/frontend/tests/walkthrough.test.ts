// End-to-end UI walkthrough against the live service: schedule setup,
// handoff accept, participant invite, sharing-matrix edit, template launch —
// every mutation verified through GET endpoints afterwards.

import assert from "node:assert/strict";
import { after, before, test } from "node:test";

import { Api } from "../src/api.js";
import { createApp } from "../src/app.js";
import {
  Service,
  click,
  client,
  dom,
  jobSearchTemplate,
  registered,
  setValue,
  startService,
} from "./harness.js";

let service: Service;
let stan: Api;
let jennifer: Api;
let app: ReturnType<typeof createApp>;
let alexApi: Api;
let verify: Api; // a separate client reading GET endpoints with alex's token
let doc: Document;

before(async () => {
  service = await startService();
  stan = await registered(service.baseUrl, "stan");
  jennifer = await registered(service.baseUrl, "jennifer");
  doc = dom();
  alexApi = client(service.baseUrl);
  app = createApp(doc, alexApi);
  doc.body.append(app.root);
  await app.signIn("alex");
  verify = client(service.baseUrl);
  verify.token = alexApi.token;
  verify.user = "alex";
});

after(() => {
  service.stop();
});

test("schedule setup through the editor", async () => {
  await app.show("schedule");
  for (const time of ["18:00", "11:00", "13:00"]) {
    setValue(doc.querySelector(".time-input"), time);
    click(doc.querySelector(".add-time"));
  }
  click(doc.querySelector(".save-schedule"));
  await app.flush();

  const stored = await verify.schedule();
  assert.deepEqual(stored.times, ["11:00", "13:00", "18:00"]);
  assert.match(doc.querySelector(".notice")!.textContent!, /Saved/);
});

test("handoff offer accepted from the prompter session", async () => {
  const taskId = await stan.createTask("Create presentation");
  await stan.offerHandoff(taskId, "alex");

  await app.show("session");
  const item = doc.querySelector(`.agenda .pending_handoff[data-task="${taskId}"]`);
  assert.ok(item, "the offer appears in the agenda");
  assert.equal(item!.querySelectorAll("button").length, 2); // exactly Accept and Decline
  click(item!.querySelector(".accept"));
  await app.flush();

  const task = await verify.task(taskId);
  assert.equal(task.owner, "alex");
  assert.deepEqual(task.participants, ["stan"]);
  assert.equal(
    doc.querySelector(`.agenda .pending_handoff[data-task="${taskId}"]`),
    null,
    "decided item left the agenda",
  );
});

test("participant invited from the goal screen", async () => {
  await app.show("tasks");
  click(doc.querySelector('.open-task[data-task="t1"]'));
  setValue(doc.querySelector(".invite-user"), "jennifer");
  click(doc.querySelector(".invite"));
  await app.flush();

  const task = await verify.task("t1");
  assert.deepEqual(
    task.pending_invitations.map((i) => i.user),
    ["jennifer"],
  );
  await app.show("tasks");
  click(doc.querySelector('.open-task[data-task="t1"]'));
  assert.match(
    doc.querySelector('.participants .pending[data-user="jennifer"]')!.textContent!,
    /pending/,
  );

  await jennifer.respondInvitation("t1", "accept");
  assert.deepEqual((await verify.task("t1")).participants, ["jennifer", "stan"]);
});

test("sharing matrix edited and saved", async () => {
  await app.show("tasks");
  click(doc.querySelector('.open-task[data-task="t1"]'));
  const boxes = doc.querySelectorAll<HTMLInputElement>(".share-box");
  assert.ok(boxes.length >= 10, "matrix covers kinds x participants");
  for (const kind of ["status_change", "completion"]) {
    const box = doc.querySelector<HTMLInputElement>(
      `.share-box[data-kind="${kind}"][data-user="jennifer"]`,
    );
    box!.checked = false;
  }
  click(doc.querySelector(".save-sharing"));
  await app.flush();

  const task = await verify.task("t1");
  assert.deepEqual(task.sharing.status_change, ["stan"]);
  assert.deepEqual(task.sharing.completion, ["stan"]);
  assert.equal(task.sharing.comment, "all");
});

test("template parsed, roles bound, launched", async () => {
  await app.show("tasks");
  const text = jobSearchTemplate();
  setValue(doc.querySelector(".template-text"), text);
  click(doc.querySelector(".parse-template"));
  await app.flush();
  assert.match(doc.querySelector(".template-name")!.textContent!, /Job search presentation/);

  // missing Reviewer binding blocks the launch and highlights the role
  setValue(doc.querySelector('.bind-user[data-role="Coach"]'), "stan");
  setValue(doc.querySelector('.bind-user[data-role="Client"]'), "alex");
  click(doc.querySelector(".launch-template"));
  await app.flush();
  assert.ok(doc.querySelector('.binding.missing[data-role="Reviewer"]'));
  assert.match(doc.querySelector(".tasks-screen .error")!.textContent!, /Reviewer/);

  setValue(doc.querySelector('.bind-user[data-role="Reviewer"]'), "jennifer");
  click(doc.querySelector(".launch-template"));
  await app.flush();
  assert.match(doc.querySelector(".launch-result")!.textContent!, /5 tasks created/);

  const tasks = await verify.tasks();
  const root = tasks.find((t) => t.title === "Job search presentation");
  assert.ok(root, "root task visible");
  const steps = tasks.filter((t) => t.parent === root!.task_id);
  assert.equal(steps.length, 4);
  for (const step of steps) {
    assert.equal(step.owner, "alex"); // offers pending, nothing auto-assigned
  }
  const review = steps.find((t) => t.title === "Review presentation");
  assert.deepEqual(
    review!.pending_handoffs.map((h) => h.to),
    ["jennifer"],
  );
});
