"""`fed` command line interface.

`fed up` runs the configured federation with real HTTP listeners; the other
verbs talk to those listeners. The demo verbs run a self-contained in-process
federation and print the outcome. Exit codes: 0 success, 1 domain error,
2 usage error.
"""
from __future__ import annotations

import json
import sys

import click
import httpx

from .errors import FederationError
from .federation import Federation, load_config
from .model import encode_id_for_path
from .repository import ROLE_INTERNAL


def _org_client(config, org_id):
    oc = next((o for o in config.organizations if o.org_id == org_id), None)
    if oc is None:
        raise FederationError(f"unknown organization {org_id!r}")
    token = next((t for t, e in oc.tokens.items()
                  if e.get("role") == ROLE_INTERNAL), None)
    headers = {"authorization": f"Bearer {token}"} if token else {}
    return httpx.Client(base_url=oc.internal_base_url, headers=headers, timeout=10.0)


def _echo_json(payload):
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


def _request(client, method, path, **kw):
    resp = client.request(method, path, **kw)
    if resp.status_code >= 400:
        click.echo(f"error {resp.status_code}: {resp.text}", err=True)
        sys.exit(1)
    return resp.json() if resp.content else {}


@click.group()
@click.option("-c", "--config", "config_path", default="configs/demo.yaml",
              show_default=True, help="Federation config file.")
@click.pass_context
def main(ctx, config_path):
    """Operate a copy-on-write digital-twin federation."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path


def _load(ctx):
    try:
        return load_config(ctx.obj["config_path"])
    except FederationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@main.command()
@click.pass_context
def up(ctx):
    """Start every service of the federation (blocks)."""
    config = _load(ctx)
    federation = Federation(config)
    click.echo("federation up; listeners:")
    for oc in config.organizations:
        click.echo(f"  {oc.org_id}: internal {oc.internal_base_url} "
                   f"external {oc.external_base_url}")
    federation.serve()


@main.group()
def shells():
    """Inspect shells."""


@shells.command("list")
@click.option("--org", required=True)
@click.pass_context
def shells_list(ctx, org):
    config = _load(ctx)
    with _org_client(config, org) as client:
        _echo_json(_request(client, "GET", "/shells"))


@main.command()
@click.option("--from", "source_org", required=True, help="Source organization.")
@click.option("--shell", "shell_id", required=True, help="Source shell id.")
@click.option("--version", default=1, show_default=True, type=int)
@click.option("--to", "target_org", required=True, help="Target organization.")
@click.option("--mode", default="shell-only",
              type=click.Choice(["shell-only", "with-submodels"]))
@click.pass_context
def clone(ctx, source_org, shell_id, version, target_org, mode):
    """Clone a shell across organizations (preserving the asset id)."""
    config = _load(ctx)
    body = {"sourceOrgId": source_org, "sourceShellId": shell_id,
            "sourceVersion": version, "targetOrgId": target_org,
            "requestedBy": "cli", "mode": mode}
    with _org_client(config, target_org) as client:
        _echo_json(_request(client, "POST", "/clone", json=body))


@main.group()
def snapshot():
    """Snapshot commits of a repository."""


@snapshot.command("commit")
@click.option("--org", required=True)
@click.option("--tag", default=None)
@click.option("--message", default="")
@click.pass_context
def snapshot_commit(ctx, org, tag, message):
    config = _load(ctx)
    with _org_client(config, org) as client:
        _echo_json(_request(client, "POST", "/snapshots",
                            json={"tag": tag, "message": message}))


@snapshot.command("diff")
@click.option("--org", required=True)
@click.argument("commit_a")
@click.argument("commit_b")
@click.pass_context
def snapshot_diff(ctx, org, commit_a, commit_b):
    config = _load(ctx)
    with _org_client(config, org) as client:
        _echo_json(_request(client, "GET", f"/snapshots/{commit_a}/diff/{commit_b}"))


@snapshot.command("promote")
@click.option("--org", required=True)
@click.argument("commit_id")
@click.pass_context
def snapshot_promote(ctx, org, commit_id):
    config = _load(ctx)
    with _org_client(config, org) as client:
        _echo_json(_request(client, "POST", f"/snapshots/{commit_id}/promote"))


@main.group()
def tasks():
    """Open user tasks."""


@tasks.command("list")
@click.option("--org", required=True)
@click.option("--group", default=None)
@click.pass_context
def tasks_list(ctx, org, group):
    config = _load(ctx)
    with _org_client(config, org) as client:
        params = {"group": group} if group else {}
        _echo_json(_request(client, "GET", "/tasks", params=params))


@tasks.command("complete")
@click.option("--org", required=True)
@click.option("--user", default=None, help="Acting user (defaults to token user).")
@click.option("--set", "values", multiple=True, metavar="KEY=VALUE",
              help="Form values, repeatable.")
@click.argument("task_id")
@click.pass_context
def tasks_complete(ctx, org, user, values, task_id):
    config = _load(ctx)
    parsed = {}
    for pair in values:
        if "=" not in pair:
            raise click.UsageError(f"--set expects KEY=VALUE, got {pair!r}")
        key, _, value = pair.partition("=")
        parsed[key] = value
    body = {"values": parsed}
    if user:
        body["user"] = user
    with _org_client(config, org) as client:
        _echo_json(_request(client, "POST", f"/tasks/{task_id}/complete", json=body))


@main.command()
@click.option("--org", required=True)
@click.option("--asset", "asset_id", required=True)
@click.pass_context
def consolidated(ctx, org, asset_id):
    """Consolidated cross-organization view of one asset."""
    config = _load(ctx)
    with _org_client(config, org) as client:
        _echo_json(_request(
            client, "GET", f"/assets/{encode_id_for_path(asset_id)}/consolidated"))


@main.group()
def demo():
    """Self-contained scripted scenarios (in-process, no servers needed)."""


@demo.command("copy-on-write")
@click.pass_context
def demo_copy_on_write(ctx):
    """Clone, copy-on-write modify, add a submodel, print the asset view."""
    config = _load(ctx)
    federation = Federation(config)
    try:
        _echo_json(federation.demo_copy_on_write())
    except FederationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    finally:
        federation.stop()


@demo.command("service-request")
@click.option("--decline", is_flag=True, help="Decline instead of confirming.")
@click.pass_context
def demo_service_request(ctx, decline):
    """Drive the cross-organization service-request workflow."""
    config = _load(ctx)
    federation = Federation(config)
    try:
        _echo_json(federation.demo_service_request(confirm=not decline))
    except FederationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    finally:
        federation.stop()


if __name__ == "__main__":
    main()
